"""Running an optimizer from many random starting designs."""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ..bayes import DrawSet
from ..design import DesignSpec, random_design
from ..rng import child_seed, spawn_seeds
from .annealing import simulated_annealing
from .cooling import CoolingConfig
from .exchange import coordinate_exchange
from .results import OptimizerResult

ALGORITHMS = ("SA", "CE")


def start_designs(spec: DesignSpec, n_starts: int, seed: int) -> list[tuple[np.ndarray, int]]:
    """``(initial design, run seed)`` for each start, a pure function of ``(seed, index)``."""
    return [_nth_start(spec, seed, i) for i in range(n_starts)]


def run_one(algorithm, spec, draws, cfg, initial, run_seed, deadline=None, record_trace=False):
    if algorithm == "SA":
        return simulated_annealing(
            spec, draws, cfg or CoolingConfig(), initial, run_seed,
            deadline=deadline, record_trace=record_trace,
        )
    if algorithm == "CE":
        return coordinate_exchange(
            spec, draws, initial, run_seed, deadline=deadline, record_trace=record_trace
        )
    raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}")


def _run_packed(args):
    return run_one(*args)


def multistart(
    algorithm: str,
    spec: DesignSpec,
    draws: DrawSet,
    cfg: CoolingConfig | None = None,
    n_starts: int | None = 1,
    seed: int = 0,
    time_budget: float | None = None,
    *,
    workers: int = 1,
    initial_designs: list[np.ndarray] | None = None,
    record_trace: bool = False,
) -> tuple[OptimizerResult, list[OptimizerResult]]:
    """Run ``algorithm`` ("SA" or "CE") from ``n_starts`` seeded random designs.

    Start ``i`` depends only on ``(seed, i)``, so results do not depend on
    ``workers``. Passing ``initial_designs`` overrides the random starts (used
    to pair CE and SA runs). With ``time_budget`` set, starts are run one after
    another until the budget is spent; each run is cut at the deadline and
    ``n_starts=None`` means "as many as fit" (after any ``initial_designs``,
    further random starts are drawn).

    Returns the best result by D_B and the list of all results in start order.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}")
    if n_starts is None and time_budget is None:
        raise ValueError("n_starts=None needs a time_budget")
    if n_starts is not None and n_starts < 1:
        raise ValueError("n_starts must be >= 1")

    if initial_designs is not None:
        if n_starts is not None and len(initial_designs) != n_starts:
            raise ValueError("initial_designs must have n_starts entries")
        run_seeds = spawn_seeds(seed, len(initial_designs))
        starts = list(zip(initial_designs, run_seeds))
    else:
        starts = None

    results: list[OptimizerResult] = []
    if time_budget is not None:
        deadline = time.monotonic() + time_budget
        indices = range(n_starts) if n_starts is not None else itertools.count()
        for i in indices:
            if time.monotonic() >= deadline:
                break
            # given starts first, then fresh random ones while the budget lasts
            initial, run_seed = starts[i] if starts and i < len(starts) else _nth_start(spec, seed, i)
            results.append(
                run_one(algorithm, spec, draws, cfg, initial, run_seed, deadline, record_trace)
            )
        if not results:
            raise RuntimeError("time budget expired before the first start")
    else:
        if starts is None:
            starts = start_designs(spec, n_starts, seed)
        jobs = [(algorithm, spec, draws, cfg, d, s, None, record_trace) for d, s in starts]
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_run_packed, jobs))
        else:
            results = [_run_packed(job) for job in jobs]

    best = max(results, key=lambda r: r.best_d_b)
    return best, results


def _nth_start(spec: DesignSpec, seed: int, i: int) -> tuple[np.ndarray, int]:
    design_seed, run_seed = spawn_seeds(child_seed(seed, i), 2)
    return random_design(spec, design_seed), run_seed
