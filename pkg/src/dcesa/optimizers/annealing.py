"""Simulated annealing over choice designs."""

from __future__ import annotations

import math
import time

import numpy as np

from ..bayes import DrawSet
from ..design import NEIGHBORHOODS, DesignSpec, validate_design
from ..rng import as_generator
from .cooling import CoolingConfig, acceptance_probability, estimate_initial_temperature
from .evaluator import CriterionTracker
from .results import OptimizerResult

# a revisited design can reappear a few ulps above the recorded best
BEST_TOL = 1e-9
CLOCK_EVERY = 100


def simulated_annealing(
    spec: DesignSpec,
    draws: DrawSet,
    cfg: CoolingConfig,
    initial: np.ndarray,
    seed: int | None = None,
    *,
    T0: float | None = None,
    time_budget: float | None = None,
    deadline: float | None = None,
    record_trace: bool = False,
) -> OptimizerResult:
    """Maximise the Bayesian D-criterion by simulated annealing.

    Each iteration sets the temperature from the cooling function of the
    current counter ``k``, draws a neighbour that differs in one choice set,
    and accepts it with the Metropolis probability. After
    ``cfg.reheat_patience`` consecutive rejections the temperature is reset to
    ``T0`` and ``k`` to 0, unless the best design did not improve since the
    previous reheat, in which case the run stops.

    ``time_budget`` (seconds from the call) or ``deadline`` (a
    ``time.monotonic()`` value) cut the run short; the clock is read every
    100 iterations.
    """
    t_start = time.monotonic()
    if time_budget is not None:
        deadline = min(deadline, t_start + time_budget) if deadline is not None else t_start + time_budget
    rng = as_generator(seed)
    neighbor = NEIGHBORHOODS[cfg.exploration]
    design = validate_design(initial, spec).astype(np.int64).copy()

    if T0 is None:
        T0 = estimate_initial_temperature(spec, draws, cfg, rng, start=design)
    tracker = CriterionTracker(design, spec, draws, refresh_every=cfg.refresh_every)
    current = tracker.value
    initial_value = current
    best, best_design = current, design.copy()

    trace = [] if record_trace else None
    n_evals = 0
    iteration = 0
    k = 0
    since_accept = 0
    improved_this_cycle = False
    n_reheats = 0
    stop_reason = "no_improvement_in_cycle"
    while True:
        T = cfg.temperature(k, T0)
        cand, s = neighbor(design, spec, rng)
        value = tracker.propose(s, cand[s])
        n_evals += 1
        p = acceptance_probability(value, current, T)
        accepted = p >= 1.0 or (p > 0.0 and rng.random() < p)
        if accepted:
            current = tracker.commit()
            design = cand
            since_accept = 0
            if current > best + BEST_TOL:
                current = tracker.refresh()
                best, best_design = current, design.copy()
                improved_this_cycle = True
        else:
            since_accept += 1
        iteration += 1
        k += 1
        if trace is not None:
            trace.append((iteration, T, value, accepted, best))

        if since_accept >= cfg.reheat_patience:
            if not improved_this_cycle:
                break
            n_reheats += 1
            k = 0
            since_accept = 0
            improved_this_cycle = False
        if cfg.max_iterations is not None and iteration >= cfg.max_iterations:
            stop_reason = "max_iterations"
            break
        if deadline is not None and iteration % CLOCK_EVERY == 0 and time.monotonic() >= deadline:
            stop_reason = "time_budget"
            break

    return OptimizerResult(
        best_design=best_design,
        best_d_b=best,
        n_criterion_evaluations=n_evals,
        wall_time=time.monotonic() - t_start,
        seed=seed if isinstance(seed, (int, np.integer)) else None,
        algorithm=f"SA[{cfg.label}]",
        initial_d_b=initial_value,
        n_iterations=iteration,
        n_reheats=n_reheats,
        stop_reason=stop_reason,
        T0=T0,
        trace=trace,
    )
