"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Seeds are fixed constants. Statistical criteria report their outcome as-is;
the long-running ones (3, 4, 6, 7) take several minutes each on one core.
"""

import json
import math
import time

import numpy as np
import pytest

from dcesa.bayes import (
    Prior,
    bayesian_d,
    draws_monte_carlo,
    make_draws,
    prior_family,
    relative_efficiency,
)
from dcesa.cli import main
from dcesa.design import DesignSpec, as_blocks, code_design, random_design
from dcesa.evaluation import SimulationStudy, crossing_point, expected_min_t_curve
from dcesa.io import load_fixture
from dcesa.mnl import (
    ChoiceData,
    choice_probabilities,
    fit_mnl,
    hessian,
    information_matrix,
    log_likelihood,
    score,
    simulate_choices,
    update_information_matrix,
)
from dcesa.optimizers.cooling import CoolingConfig, acceptance_probability
from dcesa.optimizers.evaluator import CriterionTracker
from dcesa.optimizers.multistart import multistart, start_designs

BASE = DesignSpec((2, 2, 2, 3, 3, 3), 15, 2)
REF_SPEC = DesignSpec((2, 2, 2, 4, 4, 4), 15, 2)
REF_PRIOR = Prior(np.array([-1.0, -1.0, -1.0] + [-1.0, -0.5, 0.5] * 3), np.eye(12))


def d_b(design, spec, draws):
    return bayesian_d(code_design(design, spec), draws, spec.n_alts)


def reference_designs():
    return load_fixture("reference_ce.csv", REF_SPEC), load_fixture("reference_sa.csv", REF_SPEC)


class TestAcceptance:
    def test_criterion_1_incremental_update(self, acceptance):
        t0 = time.monotonic()
        worst_update = worst_tracker = 0.0
        n = 0
        for J in (2, 3):
            spec = DesignSpec(BASE.levels, BASE.n_sets, J)
            one_set = DesignSpec(BASE.levels, 1, J)
            rng = np.random.default_rng(100 + J)
            draws = make_draws(Prior(np.zeros(9), np.eye(9)), seed=J, n_rotations=1)
            for _ in range(10):  # 10 random designs x 50 replacements per J
                design = random_design(spec, rng)
                beta = rng.normal(size=9)
                M = information_matrix(code_design(design, spec), beta, J)
                tracker = CriterionTracker(design, spec, draws, refresh_every=10**9)
                for _ in range(50):
                    s = int(rng.integers(spec.n_sets))
                    block = random_design(one_set, rng)[0]
                    M = update_information_matrix(
                        M, code_design(design[s:s + 1], one_set), code_design(block[None], one_set), beta
                    )
                    design[s] = block
                    full = information_matrix(code_design(design, spec), beta, J)
                    worst_update = max(worst_update, float(np.max(np.abs(M - full))))
                    tracker.propose(s, block)
                    tracker.commit()
                    n += 1
                full_nodes = np.stack([information_matrix(code_design(design, spec), b, J) for b in draws.betas])
                worst_tracker = max(worst_tracker, float(np.max(np.abs(tracker.M - full_nodes))))
        elapsed = time.monotonic() - t0
        ok = n == 1000 and worst_update <= 1e-10 and worst_tracker <= 1e-10 and elapsed < 60
        acceptance(1, ok, f"{n} replacements, max |update - recompute| = {worst_update:.2e}, "
                          f"tracker {worst_tracker:.2e} (tol 1e-10), {elapsed:.1f}s")
        assert ok

    def test_criterion_2_quadrature(self, acceptance):
        t0 = time.monotonic()
        prior = prior_family(1.0, 1.0, BASE)
        draws = make_draws(prior, "spherical_radial", seed=0, n_radial=3, n_rotations=10)
        quad = float(draws.weights @ np.einsum("ni,ni->n", draws.betas, draws.betas))
        exact = float(prior.mean @ prior.mean + np.trace(prior.covariance))
        quad_err = abs(quad - exact)
        mc = draws_monte_carlo(prior, 65_536, seed=2024)
        rel = []
        for i in range(10):
            design = random_design(BASE, 500 + i)
            a, b = d_b(design, BASE, draws), d_b(design, BASE, mc)
            rel.append(abs(a - b) / abs(b))
        elapsed = time.monotonic() - t0
        n_ok = sum(r <= 0.02 for r in rel)
        ok = quad_err <= 1e-8 and n_ok == 10 and elapsed < 120
        acceptance(2, ok, f"quadratic moment error {quad_err:.1e} (tol 1e-8); {n_ok}/10 designs within 2% of "
                          f"65,536-draw MC (max rel diff {max(rel):.2%}), {elapsed:.0f}s")
        assert ok

    def test_criterion_3_cooling_schedules(self, acceptance):
        t0 = time.monotonic()
        prior = Prior(np.zeros(9), np.eye(9))
        schedules = {
            (f, e): CoolingConfig(function=f, exploration=e)
            for f in ("hyperbolic", "geometric") for e in ("attribute", "profile")
        }
        means = {k: [] for k in schedules}
        wins = 0
        for meta in range(5):
            draws = make_draws(prior, "spherical_radial", seed=1000 + meta, n_radial=3, n_rotations=4)
            for key, cfg in schedules.items():
                _, runs = multistart("SA", BASE, draws, cfg, 20, seed=2000 + meta)
                means[key].append(float(np.mean([r.best_d_b for r in runs])))
            best = max(schedules, key=lambda k: means[k][meta])
            wins += best == ("hyperbolic", "attribute")
        elapsed = time.monotonic() - t0
        ha = float(np.mean(means[("hyperbolic", "attribute")]))
        gp = float(np.mean(means[("geometric", "profile")]))
        ok = ha >= gp and wins >= 4 and elapsed < 1800
        table = ", ".join(f"{f[:3]}+{e[:4]} {np.mean(v):.3f}" for (f, e), v in means.items())
        acceptance(3, ok, f"mean D_B {table}; hyp+attr best in {wins}/5 meta-runs, {elapsed:.0f}s")
        assert ok

    def test_criterion_4_sa_beats_ce(self, acceptance):
        t0 = time.monotonic()
        draws = make_draws(prior_family(1.0, 1.0, BASE), seed=0)
        designs = [d for d, _ in start_designs(BASE, 20, 7)]
        _, ce = multistart("CE", BASE, draws, None, 20, 7, initial_designs=designs)
        _, sa = multistart("SA", BASE, draws, CoolingConfig(), 20, 7, initial_designs=designs)
        eff = np.array([relative_efficiency(c.best_d_b, s.best_d_b, BASE.m) for c, s in zip(ce, sa)])
        ce_mean = float(np.mean([r.best_d_b for r in ce]))
        sa_mean = float(np.mean([r.best_d_b for r in sa]))
        share = float(np.mean(eff < 1))
        elapsed = time.monotonic() - t0
        ok = sa_mean > ce_mean and eff.mean() < 1 and share > 0.7 and elapsed < 1800
        acceptance(4, ok, f"mean D_B SA {sa_mean:.4f} vs CE {ce_mean:.4f}; mean eff(CE, SA) {eff.mean():.4f}, "
                          f"{share:.0%} of pairs below 1 (need > 70%), {elapsed:.0f}s")
        assert ok

    def test_criterion_5_reference_designs(self, acceptance):
        t0 = time.monotonic()
        ce, sa = reference_designs()
        draws = make_draws(REF_PRIOR, seed=0)
        d_ce, d_sa = d_b(ce, REF_SPEC, draws), d_b(sa, REF_SPEC, draws)
        eff = relative_efficiency(d_ce, d_sa, 12)
        fine = make_draws(REF_PRIOR, seed=0, n_rotations=300)
        eff_fine = relative_efficiency(d_b(ce, REF_SPEC, fine), d_b(sa, REF_SPEC, fine), 12)
        elapsed = time.monotonic() - t0
        ok = d_sa > d_ce and abs(100 * eff - 95.87) <= 2.0 and elapsed < 60
        acceptance(5, ok, f"D_B SA {d_sa:.4f} > CE {d_ce:.4f}; efficiency {100 * eff:.2f}% (target 95.87 +/- 2, "
                          f"{len(draws)} nodes; 300-rotation reference {100 * eff_fine:.2f}%), {elapsed:.0f}s")
        assert ok

    def test_criterion_6_emse_direction(self, acceptance):
        t0 = time.monotonic()
        ce, sa = reference_designs()
        beta = REF_PRIOR.mean
        beta_wins = p_wins = 0
        rows = []
        for meta in range(5):
            r_ce = SimulationStudy(ce, REF_SPEC, beta, 100, 200, seed=meta).run()
            r_sa = SimulationStudy(sa, REF_SPEC, beta, 100, 200, seed=meta).run()
            beta_wins += r_ce.emse_beta > r_sa.emse_beta
            p_wins += r_ce.emse_p > r_sa.emse_p
            rows.append(f"[{r_ce.emse_beta:.4f}/{r_sa.emse_beta:.4f}, {r_ce.emse_p:.5f}/{r_sa.emse_p:.5f}]")
        elapsed = time.monotonic() - t0
        ok = beta_wins >= 4 and p_wins >= 4 and elapsed < 1200
        acceptance(6, ok, f"EMSE_beta CE > SA in {beta_wins}/5, EMSE_p CE > SA in {p_wins}/5 (need >= 4 each); "
                          f"CE/SA per meta-run {' '.join(rows)}, {elapsed:.0f}s")
        assert ok

    def test_criterion_7_t_crossing(self, acceptance):
        t0 = time.monotonic()
        ce, sa = reference_designs()
        r_range = range(5, 41)
        curve_ce = expected_min_t_curve(ce, REF_SPEC, REF_PRIOR.mean, r_range, 200, seed=0)
        curve_sa = expected_min_t_curve(sa, REF_SPEC, REF_PRIOR.mean, r_range, 200, seed=0)
        x_ce, x_sa = crossing_point(curve_ce), crossing_point(curve_sa)
        skipped = sum(s for *_, s in curve_ce) + sum(s for *_, s in curve_sa)
        elapsed = time.monotonic() - t0
        ok = x_sa is not None and x_ce is not None and x_sa <= x_ce and elapsed < 1200
        acceptance(7, ok, f"E|t|_min crosses 1.96 at r = {x_sa} (SA) vs {x_ce} (CE); "
                          f"{skipped} non-converged replicates skipped, {elapsed:.0f}s")
        assert ok

    def test_criterion_8_mle(self, acceptance):
        spec = DesignSpec((2,), 1, 2)
        choices = np.ones((100, 1), dtype=int)
        choices[75:] = 2
        fit = fit_mnl(ChoiceData(choices, 2), code_design(np.array([[[1], [2]]]), spec), spec)
        inv_err = abs(fit.beta_hat[0] - 0.5 * math.log(3))
        grad_worst = info_worst = 0.0
        for seed in range(50):
            rng = np.random.default_rng(seed)
            sp = DesignSpec((2, 3, 3), int(rng.integers(4, 9)), int(rng.integers(2, 4)))
            d = random_design(sp, rng)
            data = simulate_choices(d, sp, rng.normal(size=sp.m) * 0.7, int(rng.integers(5, 40)), rng)
            blocks = as_blocks(code_design(d, sp), sp.n_alts)
            beta = rng.normal(size=sp.m) * 0.5
            counts = data.counts()
            g = score(beta, counts, blocks)
            h = 1e-5
            fd = np.array([
                (log_likelihood(beta + h * e, counts, blocks) - log_likelihood(beta - h * e, counts, blocks)) / (2 * h)
                for e in np.eye(sp.m)
            ])
            grad_worst = max(grad_worst, float(np.max(np.abs(g - fd)) / np.max(np.abs(fd))))
            H = hessian(beta, counts, blocks)
            info_worst = max(info_worst, float(np.max(np.abs(H + data.n_respondents * information_matrix(blocks, beta)))))
        ok = fit.converged and inv_err <= 1e-6 and grad_worst <= 1e-4 and info_worst <= 1e-10
        acceptance(8, ok, f"logit inversion error {inv_err:.1e} (tol 1e-6); gradient vs FD max rel {grad_worst:.1e} "
                          f"over 50 instances (tol 1e-4); observed - expected information {info_worst:.1e} (tol 1e-10)")
        assert ok

    def test_criterion_9_cli_determinism(self, acceptance, tmp_path):
        doc = {
            "problem": {"levels": list(BASE.levels), "n_sets": BASE.n_sets, "n_alts": 2},
            "prior": {"family": {"lambda": 1.0, "kappa": 1.0}},
            "quadrature": {"method": "spherical_radial", "n_radial": 3, "n_rotations": 2, "seed": 3},
            "algorithm": {"name": "SA", "cooling": {"max_iterations": 20000}},
            "multistart": {"n_starts": 4, "seed": 42},
            "outputs": {"dir": "out"},
        }
        (tmp_path / "out").mkdir()
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps(doc))
        outputs = []
        for threads in ("1", "8", "1"):
            assert main(["optimize", "--config", str(cfg), "--threads", threads]) == 0
            outputs.append((tmp_path / "out" / "optimize_design.csv").read_bytes())
        ok = outputs[0] == outputs[1] == outputs[2]
        acceptance(9, ok, "optimize design CSV byte-identical for --threads 1, 8 and a rerun"
                          if ok else "design CSVs differ between runs")
        assert ok

    def test_criterion_10_invariance(self, acceptance):
        rng = np.random.default_rng(10)
        n = 1000
        draws = make_draws(Prior(np.full(9, -0.3), np.eye(9)), seed=4, n_radial=2, n_rotations=1)
        perm_worst = 0.0
        for i in range(n):
            spec = BASE if i % 2 == 0 else DesignSpec(BASE.levels, BASE.n_sets, 3)
            design = random_design(spec, rng)
            shuffled = design[rng.permutation(spec.n_sets)]
            shuffled = np.stack([block[rng.permutation(spec.n_alts)] for block in shuffled])
            a, b = d_b(design, spec, draws), d_b(shuffled, spec, draws)
            perm_worst = max(perm_worst, abs(a - b) if np.isfinite(a) else float(np.isfinite(b)))
        zero_sum_worst = 0.0
        for _ in range(n):
            sp = DesignSpec(tuple(int(v) for v in rng.integers(2, 7, size=rng.integers(1, 6))), 1, 2)
            for table in sp.coding_tables:
                zero_sum_worst = max(zero_sum_worst, float(np.max(np.abs(table.sum(axis=0)))))
        norm_worst, negative = 0.0, 0
        for _ in range(n):
            J, m = int(rng.integers(2, 6)), int(rng.integers(1, 10))
            p = choice_probabilities(rng.normal(size=(J, m)), rng.normal(size=m) * rng.choice([0.1, 1, 10, 100]))
            norm_worst = max(norm_worst, abs(p.sum() - 1.0))
            negative += int(np.any(p < 0))
        split_bad = 0
        for _ in range(n):
            d_cur, T = rng.normal() * 5, float(np.exp(rng.normal() * 3))
            d_new = d_cur + rng.normal() * rng.choice([1e-12, 1e-3, 1, 10])
            p = acceptance_probability(d_new, d_cur, T)
            if d_new >= d_cur:
                split_bad += p != 1.0
            else:
                split_bad += not (0.0 <= p < 1.0 and math.isclose(p, math.exp((d_new - d_cur) / T), rel_tol=1e-12))
        ok = perm_worst <= 1e-10 and zero_sum_worst == 0.0 and norm_worst <= 1e-12 and negative == 0 and split_bad == 0
        acceptance(10, ok, f"{n} instances each: permutation |dD_B| max {perm_worst:.1e}; coding column sums "
                           f"max {zero_sum_worst:.0e}; |sum p - 1| max {norm_worst:.1e}; acceptance case-split "
                           f"violations {split_bad}")
        assert ok
