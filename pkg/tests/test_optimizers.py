import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcesa.bayes import DrawSet, Prior, bayesian_d, make_draws
from dcesa.design import DesignSpec, as_blocks, code_design, random_design
from dcesa.mnl import information_matrices
from dcesa.optimizers.annealing import simulated_annealing
from dcesa.optimizers.cooling import (
    CoolingConfig,
    DegenerateProblemError,
    acceptance_probability,
    cooling_geometric,
    cooling_hyperbolic,
    estimate_initial_temperature,
    temperature_from_gap,
)
from dcesa.optimizers.evaluator import CriterionTracker
from dcesa.optimizers.exchange import coordinate_exchange
from dcesa.optimizers.multistart import multistart, start_designs


def d_b(design, spec, draws):
    return bayesian_d(code_design(design, spec), draws, spec.n_alts)


class TestCooling:
    def test_geometric(self):
        assert cooling_geometric(0, 5.0) == 5.0
        assert cooling_geometric(100, 1.0, 0.99) == pytest.approx(0.3660, abs=5e-5)
        t = [cooling_geometric(k, 2.0) for k in range(200)]
        assert all(a > b for a, b in zip(t, t[1:]))

    def test_hyperbolic(self):
        assert cooling_hyperbolic(0, 5.0) == 5.0
        assert cooling_hyperbolic(9, 5.0) == pytest.approx(0.5)
        t = [cooling_hyperbolic(k, 2.0) for k in range(200)]
        assert all(a > b for a, b in zip(t, t[1:]))

    def test_crossover(self):
        # hyperbolic is colder early, warmer late
        ks = np.arange(1, 2000)
        diff = 0.99**ks - 1 / (ks + 1)
        assert diff[0] > 0 and diff[-1] < 0
        cross = ks[np.argmax(diff < 0)]
        assert 600 < cross < 700

    def test_temperature_from_gap(self):
        assert temperature_from_gap(1.0, 0.99) == pytest.approx(99.4992, abs=1e-4)
        with pytest.raises(DegenerateProblemError):
            temperature_from_gap(0.0, 0.99)
        temps = [temperature_from_gap(1.0, p) for p in (0.5, 0.9, 0.99, 0.999)]
        assert all(a < b for a, b in zip(temps, temps[1:]))

    @pytest.mark.parametrize("kwargs", [{"alpha": 1.0}, {"p0": 0.0}, {"walk_length": 0},
                                        {"reheat_patience": 0}, {"function": "linear"},
                                        {"exploration": "set"}])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            CoolingConfig(**kwargs)


class TestAcceptance:
    def test_improvement_always_accepted(self):
        assert acceptance_probability(2.0, 1.0, 0.1) == 1.0
        assert acceptance_probability(1.0, 1.0, 0.1) == 1.0

    def test_one_temperature_deficit(self):
        assert acceptance_probability(0.0, 0.7, 0.7) == pytest.approx(math.exp(-1))

    def test_sentinel(self):
        assert acceptance_probability(-math.inf, 1.0, 100.0) == 0.0

    @settings(max_examples=1000)
    @given(st.floats(-20, 20), st.floats(-20, 20), st.floats(1e-3, 1e3))
    def test_case_split(self, new, cur, T):
        p = acceptance_probability(new, cur, T)
        if new >= cur:
            assert p == 1.0
        else:
            assert 0.0 <= p < 1.0
            assert p == pytest.approx(math.exp((new - cur) / T))

    @settings(max_examples=300)
    @given(st.floats(0.01, 5), st.floats(0.01, 5), st.floats(0.1, 10))
    def test_monotone(self, deficit, extra, T):
        assert acceptance_probability(-deficit - extra, 0.0, T) < acceptance_probability(-deficit, 0.0, T)
        assert acceptance_probability(-deficit, 0.0, T) < acceptance_probability(-deficit, 0.0, T * 2)


class TestInitialTemperature:
    def test_positive_and_deterministic(self, small_spec, small_draws):
        cfg = CoolingConfig(walk_length=30)
        a = estimate_initial_temperature(small_spec, small_draws, cfg, 4)
        b = estimate_initial_temperature(small_spec, small_draws, cfg, 4)
        assert a == b > 0

    def test_degenerate_problem(self):
        # one set of two profiles can never identify two parameters
        spec = DesignSpec((2, 2), 1, 2)
        draws = DrawSet.point(np.zeros(2))
        with pytest.raises(DegenerateProblemError):
            estimate_initial_temperature(spec, draws, CoolingConfig(walk_length=5), 0)


class TestTracker:
    @pytest.mark.parametrize("J", [2, 3])
    def test_matches_full_recompute(self, J):
        spec = DesignSpec((2, 2, 2, 3, 3, 3), 15, J)
        prior = Prior(np.zeros(9), np.eye(9))
        draws = make_draws(prior, seed=1, n_rotations=1)
        rng = np.random.default_rng(J)
        design = random_design(spec, rng)
        tracker = CriterionTracker(design, spec, draws, refresh_every=10**9)
        for i in range(300):
            s = int(rng.integers(spec.n_sets))
            block = random_design(DesignSpec(spec.levels, 1, J), rng)[0]
            cand = tracker.design.copy()
            cand[s] = block
            value = tracker.propose(s, block)
            assert value == pytest.approx(d_b(cand, spec, draws), abs=1e-9)
            if i % 2 == 0:
                tracker.commit()
        full = information_matrices(as_blocks(code_design(tracker.design, spec), J), draws.betas)
        np.testing.assert_allclose(tracker.M, full, atol=1e-10, rtol=0)
        assert tracker.value == pytest.approx(d_b(tracker.design, spec, draws), abs=1e-9)

    def test_singular_current_design(self, small_spec, small_draws):
        design = random_design(small_spec, 0)
        design[:, 1] = design[:, 0]
        tracker = CriterionTracker(design, small_spec, small_draws)
        assert tracker.value == -np.inf
        block = np.array([[1, 1, 1], [2, 3, 3]])
        cand = design.copy()
        cand[0] = block
        assert tracker.propose(0, block) == d_b(cand, small_spec, small_draws)


class TestSimulatedAnnealing:
    @pytest.fixture
    def run(self, small_spec, small_draws):
        cfg = CoolingConfig(function="geometric", walk_length=20)
        return simulated_annealing(small_spec, small_draws, cfg, random_design(small_spec, 1), seed=2,
                                   record_trace=True)

    def test_result_consistent(self, run, small_spec, small_draws):
        assert run.best_d_b == pytest.approx(d_b(run.best_design, small_spec, small_draws), abs=1e-10)
        assert run.best_d_b >= run.initial_d_b
        assert run.stop_reason == "no_improvement_in_cycle"
        assert run.n_criterion_evaluations == run.n_iterations

    def test_trace_best_monotone_and_running_max(self, run):
        best = np.array([t[4] for t in run.trace])
        assert np.all(np.diff(best) >= 0)
        accepted = [t[2] for t in run.trace if t[3]]
        assert max([run.initial_d_b] + accepted) == pytest.approx(run.best_d_b, abs=1e-9)
        assert all(t[1] > 0 for t in run.trace)

    def test_stops_after_patience_without_improvement(self, run):
        # the last 1000 iterations were rejections
        assert not any(t[3] for t in run.trace[-1000:])

    def test_deterministic(self, run, small_spec, small_draws):
        cfg = CoolingConfig(function="geometric", walk_length=20)
        again = simulated_annealing(small_spec, small_draws, cfg, random_design(small_spec, 1), seed=2,
                                    record_trace=True)
        np.testing.assert_array_equal(run.best_design, again.best_design)
        assert run.best_d_b == again.best_d_b
        assert run.trace == again.trace

    @pytest.mark.parametrize("exploration", ["attribute", "profile"])
    def test_hyperbolic_with_cap(self, small_spec, small_draws, exploration):
        cfg = CoolingConfig(function="hyperbolic", exploration=exploration, max_iterations=500, walk_length=10)
        r = simulated_annealing(small_spec, small_draws, cfg, random_design(small_spec, 3), seed=4)
        assert r.n_iterations <= 500
        assert r.best_d_b == pytest.approx(d_b(r.best_design, small_spec, small_draws), abs=1e-10)

    def test_time_budget(self, spec):
        draws = make_draws(Prior(np.zeros(9), np.eye(9)), seed=0)
        r = simulated_annealing(spec, draws, CoolingConfig(), random_design(spec, 0), seed=0, time_budget=0.3)
        assert r.stop_reason in ("time_budget", "no_improvement_in_cycle")
        assert r.wall_time < 2.0

    def test_reheat_resets(self, small_spec, small_draws):
        cfg = CoolingConfig(function="geometric", alpha=0.5, reheat_patience=50, walk_length=10)
        r = simulated_annealing(small_spec, small_draws, cfg, random_design(small_spec, 5), seed=6,
                                record_trace=True)
        temps = np.array([t[1] for t in r.trace])
        # a reheat shows up as the temperature jumping back to T0
        assert np.sum(temps == r.T0) == r.n_reheats + 1


class TestCoordinateExchange:
    @pytest.fixture
    def run(self, small_spec, small_draws):
        return coordinate_exchange(small_spec, small_draws, random_design(small_spec, 8), seed=1)

    def test_locally_optimal(self, run, small_spec, small_draws):
        best = run.best_d_b
        d = run.best_design
        for s in range(small_spec.n_sets):
            for j in range(small_spec.n_alts):
                for k, L in enumerate(small_spec.levels):
                    for level in range(1, L + 1):
                        cand = d.copy()
                        cand[s, j, k] = level
                        assert d_b(cand, small_spec, small_draws) <= best + 1e-9

    def test_fixed_point(self, run, small_spec, small_draws):
        again = coordinate_exchange(small_spec, small_draws, run.best_design)
        np.testing.assert_array_equal(again.best_design, run.best_design)
        assert again.n_iterations == 1

    def test_consistent(self, run, small_spec, small_draws):
        assert run.best_d_b == pytest.approx(d_b(run.best_design, small_spec, small_draws), abs=1e-10)
        assert run.best_d_b >= run.initial_d_b

    def test_sweep_cap(self, small_spec, small_draws):
        r = coordinate_exchange(small_spec, small_draws, random_design(small_spec, 8), max_sweeps=1)
        assert r.n_iterations == 1


class TestMultistart:
    def test_single_start_equals_single_run(self, small_spec, small_draws):
        cfg = CoolingConfig(function="geometric", walk_length=10)
        best, results = multistart("SA", small_spec, small_draws, cfg, 1, seed=3)
        (initial, run_seed), = start_designs(small_spec, 1, 3)
        single = simulated_annealing(small_spec, small_draws, cfg, initial, run_seed)
        assert len(results) == 1
        assert best.best_d_b == single.best_d_b
        np.testing.assert_array_equal(best.best_design, single.best_design)

    def test_best_is_max(self, small_spec, small_draws):
        best, results = multistart("CE", small_spec, small_draws, None, 4, seed=1)
        assert best.best_d_b == max(r.best_d_b for r in results)

    def test_worker_count_independent(self, small_spec, small_draws):
        cfg = CoolingConfig(function="geometric", walk_length=10)
        _, one = multistart("SA", small_spec, small_draws, cfg, 3, seed=7, workers=1)
        _, two = multistart("SA", small_spec, small_draws, cfg, 3, seed=7, workers=2)
        assert [r.best_d_b for r in one] == [r.best_d_b for r in two]

    def test_shared_initial_designs(self, small_spec, small_draws):
        starts = [d for d, _ in start_designs(small_spec, 2, 0)]
        _, ce = multistart("CE", small_spec, small_draws, None, 2, 0, initial_designs=starts)
        np.testing.assert_allclose([r.initial_d_b for r in ce], [d_b(d, small_spec, small_draws) for d in starts],
                                   rtol=0, atol=1e-10)

    def test_time_budget_runs_until_deadline(self, small_spec, small_draws):
        cfg = CoolingConfig(function="geometric", walk_length=10)
        best, results = multistart("SA", small_spec, small_draws, cfg, None, 0, time_budget=0.5)
        assert len(results) >= 1
        assert best.best_d_b == max(r.best_d_b for r in results)

    def test_bad_algorithm(self, small_spec, small_draws):
        with pytest.raises(ValueError):
            multistart("GA", small_spec, small_draws)
