"""Cooling schedule: temperature functions, Metropolis acceptance and initial temperature."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..bayes import DrawSet
from ..design import NEIGHBORHOODS, DesignSpec, random_design
from ..rng import as_generator
from .evaluator import CriterionTracker


class DegenerateProblemError(RuntimeError):
    """The criterion is flat or singular everywhere the random walk looked."""


@dataclass(frozen=True)
class CoolingConfig:
    function: str = "hyperbolic"
    alpha: float = 0.99
    p0: float = 0.99
    walk_length: int = 100
    reheat_patience: int = 1000
    exploration: str = "attribute"
    max_iterations: int | None = None
    refresh_every: int = 10_000

    def __post_init__(self):
        if self.function not in COOLING_FUNCTIONS:
            raise ValueError(f"function must be one of {sorted(COOLING_FUNCTIONS)}, got {self.function!r}")
        if self.exploration not in NEIGHBORHOODS:
            raise ValueError(f"exploration must be one of {sorted(NEIGHBORHOODS)}, got {self.exploration!r}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 < self.p0 < 1:
            raise ValueError(f"p0 must lie in (0, 1), got {self.p0}")
        if self.walk_length < 1:
            raise ValueError("walk_length must be >= 1")
        if self.reheat_patience < 1:
            raise ValueError("reheat_patience must be >= 1")

    def temperature(self, k: int, T0: float) -> float:
        if self.function == "geometric":
            return cooling_geometric(k, T0, self.alpha)
        return cooling_hyperbolic(k, T0)

    @property
    def label(self) -> str:
        return f"{self.function}+{self.exploration}"

    def to_dict(self) -> dict:
        return asdict(self)


def cooling_geometric(k: int, T0: float, alpha: float = 0.99) -> float:
    """``alpha**k * T0``."""
    return alpha**k * T0


def cooling_hyperbolic(k: int, T0: float) -> float:
    """``T0 / (k + 1)``."""
    return T0 / (k + 1)


COOLING_FUNCTIONS = {"geometric": cooling_geometric, "hyperbolic": cooling_hyperbolic}


def acceptance_probability(d_new: float, d_cur: float, T: float) -> float:
    """Metropolis rule ``min(1, exp((d_new - d_cur) / T))``; 0 for a singular candidate."""
    if d_new == -math.inf:
        return 0.0
    if d_new >= d_cur:
        return 1.0
    # keep "1 iff not worse" exact when a tiny deficit rounds exp() up to 1
    return min(math.exp((d_new - d_cur) / T), _BELOW_ONE)


_BELOW_ONE = math.nextafter(1.0, 0.0)


def temperature_from_gap(max_gap: float, p0: float) -> float:
    """Temperature at which a move losing ``max_gap`` is accepted with probability ``p0``."""
    T0 = max_gap / abs(math.log(p0))
    if not T0 > 0:
        raise DegenerateProblemError("random walk never changed the criterion; cannot set T0")
    return T0


def estimate_initial_temperature(
    spec: DesignSpec,
    draws: DrawSet,
    cfg: CoolingConfig,
    seed=None,
    start: np.ndarray | None = None,
) -> float:
    """Initial temperature from the largest criterion jump along a random walk.

    The walk takes ``cfg.walk_length`` unconditional steps with the configured
    exploration rule, starting from ``start`` (or a random design). A step onto
    a singular design is redrawn, up to ``walk_length`` times per step.
    """
    rng = as_generator(seed)
    neighbor = NEIGHBORHOODS[cfg.exploration]
    attempts = max(cfg.walk_length, 1)
    design = np.array(start) if start is not None else random_design(spec, rng)
    tracker = CriterionTracker(design, spec, draws)
    for _ in range(attempts):
        if tracker.value > -math.inf:
            break
        design = random_design(spec, rng)
        tracker = CriterionTracker(design, spec, draws)
    else:
        raise DegenerateProblemError("could not find a non-singular design to start the walk")

    max_gap = 0.0
    current = tracker.value
    for _ in range(cfg.walk_length):
        for _ in range(attempts):
            cand, s = neighbor(design, spec, rng)
            value = tracker.propose(s, cand[s])
            if value > -math.inf:
                break
        else:
            raise DegenerateProblemError("every redrawn random-walk step was singular")
        tracker.commit()
        design = cand
        max_gap = max(max_gap, abs(value - current))
        current = value
    return temperature_from_gap(max_gap, cfg.p0)
