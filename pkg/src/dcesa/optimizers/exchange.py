"""Coordinate-exchange baseline."""

from __future__ import annotations

import time

import numpy as np

from ..bayes import DrawSet
from ..design import DesignSpec, validate_design
from .evaluator import CriterionTracker
from .results import OptimizerResult

# a level must beat the incumbent by more than this to be taken
IMPROVE_TOL = 1e-10


def coordinate_exchange(
    spec: DesignSpec,
    draws: DrawSet,
    initial: np.ndarray,
    seed: int | None = None,
    *,
    max_sweeps: int | None = None,
    deadline: float | None = None,
    record_trace: bool = False,
) -> OptimizerResult:
    """Improve a design one attribute level at a time.

    Cells are visited row-major (choice set, alternative, attribute). At each
    cell every level is scored, in ascending order, and the best one replaces
    the incumbent only if it is strictly better. Sweeps repeat until one makes
    no change, or ``max_sweeps`` is reached. The algorithm is deterministic;
    ``seed`` is only recorded.
    """
    t_start = time.monotonic()
    design = validate_design(initial, spec).astype(np.int64).copy()
    tracker = CriterionTracker(design, spec, draws)
    current = tracker.value
    initial_value = current
    n_evals = 0
    sweeps = 0
    trace = [] if record_trace else None
    stop_reason = "converged"
    while True:
        changed = False
        for s in range(spec.n_sets):
            for j in range(spec.n_alts):
                for k, n_levels in enumerate(spec.levels):
                    incumbent = int(design[s, j, k])
                    best_level, best_value = incumbent, current
                    block = design[s].copy()
                    for level in range(1, n_levels + 1):
                        if level == incumbent:
                            continue
                        block[j, k] = level
                        value = tracker.propose(s, block)
                        n_evals += 1
                        if value > best_value + IMPROVE_TOL:
                            best_level, best_value = level, value
                    if best_level != incumbent:
                        block[j, k] = best_level
                        tracker.propose(s, block)
                        current = tracker.commit()
                        design[s, j, k] = best_level
                        changed = True
                    if trace is not None:
                        trace.append((sweeps, s, j, k, best_level, current))
        sweeps += 1
        if not changed:
            break
        if max_sweeps is not None and sweeps >= max_sweeps:
            stop_reason = "max_sweeps"
            break
        if deadline is not None and time.monotonic() >= deadline:
            stop_reason = "time_budget"
            break

    best = tracker.refresh()
    return OptimizerResult(
        best_design=design,
        best_d_b=best,
        n_criterion_evaluations=n_evals,
        wall_time=time.monotonic() - t_start,
        seed=seed,
        algorithm="CE",
        initial_d_b=initial_value,
        n_iterations=sweeps,
        stop_reason=stop_reason,
        trace=trace,
    )
