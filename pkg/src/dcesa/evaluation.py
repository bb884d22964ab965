"""Design evaluation by simulation: EMSE of estimates and predictions, t-ratio curves, summaries."""

from __future__ import annotations

import itertools
import math
from collections.abc import Iterator, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .bayes import DrawSet, bayesian_d, relative_efficiency
from .design import DesignSpec, code_design, validate_design
from .mnl import FitResult, fit_mnl, simulate_choices
from .rng import child_seed, spawn_seeds

HIST_BIN_WIDTH = 0.01


def emse_beta(estimates, beta_true) -> float:
    """Mean over estimates of the squared Euclidean error ``|b - beta_true|^2``."""
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    beta_true = np.asarray(beta_true, dtype=float)
    if est.size == 0:
        raise ValueError("no estimates")
    if est.shape[1] != beta_true.shape[0]:
        raise ValueError(f"estimates have {est.shape[1]} coordinates, beta_true has {beta_true.shape[0]}")
    err = est - beta_true
    return float(np.mean(np.einsum("ni,ni->n", err, err)))


def n_choice_sets(spec: DesignSpec) -> int:
    """Number of unordered pairs of distinct profiles, C(P, 2)."""
    return math.comb(spec.n_profiles, 2)


def enumerate_choice_sets(spec: DesignSpec) -> Iterator[tuple[int, int]]:
    """Stream every pair ``(a, b)``, ``a < b``, of 0-based profile indices in lexicographic order.

    Profile indices follow :func:`dcesa.design.all_profiles`. Nothing is
    materialised; use :func:`dcesa.design.profile_from_index` to decode.
    """
    return itertools.combinations(range(spec.n_profiles), 2)


def _require_pairs(spec: DesignSpec) -> None:
    if spec.n_alts != 2:
        raise ValueError("the complete-enumeration prediction error is defined for two alternatives only")


def emse_p(estimates, beta_true, spec: DesignSpec) -> float:
    """Mean squared error of predicted choice probabilities over all pairs of profiles.

    Averages ``(p_hat_j - p_true_j)^2`` over estimates, all C(P, 2) pairs and
    both alternatives of each pair. Pairs are processed in index-range chunks
    (one row of the pair triangle at a time) and the row sums are added with ``math.fsum``.
    """
    _require_pairs(spec)
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    beta_true = np.asarray(beta_true, dtype=float)
    if est.size == 0:
        raise ValueError("no estimates")
    if est.shape[1] != spec.m or beta_true.shape[0] != spec.m:
        raise ValueError(f"estimates and beta_true must have m = {spec.m} coordinates")
    codes = spec.profile_codes
    u_true = codes @ beta_true
    u_hat = codes @ est.T  # (P, N)
    P = spec.n_profiles
    parts = []
    for a in range(P - 1):
        # the pairs (a, b), b > a; with two alternatives both squared errors are equal
        p_true = _expit(u_true[a] - u_true[a + 1 :])
        p_hat = _expit(u_hat[a] - u_hat[a + 1 :])
        diff = p_hat - p_true[:, None]
        parts.append(2.0 * float(np.sum(diff * diff)))
    total = math.fsum(parts)
    return total / (est.shape[0] * 2 * n_choice_sets(spec))


def _expit(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def min_abs_t(fit: FitResult) -> float | None:
    """Smallest absolute t-ratio of a fit, or None when the fit did not converge (skip)."""
    if not fit.converged:
        return None
    return float(np.min(np.abs(fit.t_ratios)))


def _replicate_fits(design, spec, beta_true, n_respondents, seeds) -> list[FitResult]:
    X = code_design(design, spec)
    return [
        fit_mnl(simulate_choices(design, spec, beta_true, n_respondents, s), X, spec)
        for s in seeds
    ]


def _fits_packed(args):
    return _replicate_fits(*args)


def run_replicates(design, spec, beta_true, n_respondents, seeds, workers: int = 1) -> list[FitResult]:
    """Simulate and fit one dataset per seed; order and values do not depend on ``workers``."""
    seeds = list(seeds)
    if workers <= 1 or len(seeds) < 2:
        return _replicate_fits(design, spec, beta_true, n_respondents, seeds)
    chunks = [seeds[i::workers] for i in range(workers)]
    jobs = [(design, spec, beta_true, n_respondents, c) for c in chunks if c]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_fits_packed, jobs))
    out: list[FitResult | None] = [None] * len(seeds)
    for i, part in enumerate(parts):
        out[i::workers] = part
    return out


@dataclass
class EvalReport:
    emse_beta: float
    emse_p: float
    expected_min_t: float
    n_converged: int
    n_skipped: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SimulationStudy:
    """Repeated simulate-and-fit study of one design at a fixed true parameter vector."""

    design: np.ndarray
    spec: DesignSpec
    beta_true: np.ndarray
    n_respondents: int
    n_replicates: int
    seed: int = 0

    def __post_init__(self):
        if self.n_replicates < 1:
            raise ValueError("n_replicates must be >= 1")
        if self.n_respondents < 1:
            raise ValueError("n_respondents must be >= 1")
        validate_design(self.design, self.spec)
        if len(self.beta_true) != self.spec.m:
            raise ValueError(f"beta_true must have m = {self.spec.m} entries")

    def replicate_seeds(self) -> list[int]:
        return spawn_seeds(self.seed, self.n_replicates)

    def fits(self, workers: int = 1) -> list[FitResult]:
        return run_replicates(
            self.design, self.spec, np.asarray(self.beta_true, float),
            self.n_respondents, self.replicate_seeds(), workers,
        )

    def run(self, workers: int = 1, with_emse_p: bool = True) -> EvalReport:
        """Fit every replicate; non-converged replicates are skipped and counted."""
        fits = self.fits(workers)
        good = [f for f in fits if f.converged]
        n_skipped = len(fits) - len(good)
        if not good:
            return EvalReport(math.nan, math.nan, math.nan, 0, n_skipped)
        est = np.array([f.beta_hat for f in good])
        e_p = emse_p(est, self.beta_true, self.spec) if with_emse_p and self.spec.n_alts == 2 else math.nan
        return EvalReport(
            emse_beta=emse_beta(est, self.beta_true),
            emse_p=e_p,
            expected_min_t=float(np.mean([min_abs_t(f) for f in good])),
            n_converged=len(good),
            n_skipped=n_skipped,
        )


def expected_min_t_curve(
    design, spec: DesignSpec, beta_true, r_range: Sequence[int], N: int, seed: int = 0, workers: int = 1
) -> list[tuple[int, float, int]]:
    """``(r, mean min |t|, n_skipped)`` for each respondent count ``r``.

    Replicate ``n`` at sample size ``r`` uses a seed derived from ``(seed, r, n)``,
    so a point on the curve does not depend on which other ``r`` are requested.
    """
    r_values = list(r_range)
    if not r_values:
        raise ValueError("r_range is empty")
    beta_true = np.asarray(beta_true, dtype=float)
    curve = []
    for r in r_values:
        seeds = spawn_seeds(child_seed(seed, int(r)), N)
        fits = run_replicates(design, spec, beta_true, int(r), seeds, workers)
        t = [v for v in map(min_abs_t, fits) if v is not None]
        curve.append((int(r), float(np.mean(t)) if t else math.nan, N - len(t)))
    return curve


def crossing_point(curve, threshold: float = 1.96) -> int | None:
    """Smallest ``r`` from which the curve stays at or above ``threshold``."""
    crossing = None
    for r, value, _ in curve:
        if value >= threshold:
            if crossing is None:
                crossing = r
        else:
            crossing = None
    return crossing


def efficiency_histogram(
    ce_results: Sequence, sa_results: Sequence, m: int, draws: DrawSet | None = None, spec: DesignSpec | None = None
) -> dict:
    """Paired relative efficiencies of CE results with respect to SA results, with 0.01-wide bins.

    Efficiencies come from the stored ``best_d_b`` values, or, if ``draws`` and
    ``spec`` are given, from re-evaluating both designs under ``draws``.
    """
    if len(ce_results) != len(sa_results):
        raise ValueError(f"{len(ce_results)} CE results vs {len(sa_results)} SA results")
    if not ce_results:
        raise ValueError("no results")

    def value(res):
        if draws is None:
            return res.best_d_b
        return bayesian_d(code_design(res.best_design, spec), draws, spec.n_alts)

    eff = np.array([relative_efficiency(value(c), value(s), m) for c, s in zip(ce_results, sa_results)])
    lo = math.floor(eff.min() / HIST_BIN_WIDTH)
    hi = math.floor(eff.max() / HIST_BIN_WIDTH) + 1
    edges = np.arange(lo, hi + 1) * HIST_BIN_WIDTH
    counts, _ = np.histogram(eff, bins=edges)
    return {"efficiencies": eff, "bin_edges": edges, "counts": counts}


def schedule_summary(groups: dict) -> list[dict]:
    """Per-group statistics of final D_B and runtime.

    ``groups`` maps a label (e.g. ``"hyperbolic+attribute"``) to a list of
    results. Each row has mean/median/variance of D_B and runtime plus the
    five quartile points of D_B for box plots. Variance uses ``ddof=0`` so a
    single-result group has variance 0.
    """
    rows = []
    for label, results in groups.items():
        if not results:
            raise ValueError(f"group {label!r} is empty")
        d = np.array([r.best_d_b for r in results], dtype=float)
        t = np.array([r.wall_time for r in results], dtype=float)
        rows.append({
            "group": label,
            "n": len(d),
            "mean_d_b": float(d.mean()),
            "median_d_b": float(np.median(d)),
            "var_d_b": float(d.var()),
            "mean_runtime": float(t.mean()),
            "median_runtime": float(np.median(t)),
            "var_runtime": float(t.var()),
            "quantiles_d_b": [float(q) for q in np.quantile(d, [0.0, 0.25, 0.5, 0.75, 1.0])],
        })
    return rows
