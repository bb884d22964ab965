from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerResult:
    """Outcome of one optimizer run."""

    best_design: np.ndarray
    best_d_b: float
    n_criterion_evaluations: int
    wall_time: float
    seed: int | None
    algorithm: str
    initial_d_b: float = float("nan")
    n_iterations: int = 0
    n_reheats: int = 0
    stop_reason: str = ""
    T0: float | None = None
    trace: list[tuple] | None = field(default=None, repr=False)

    def summary(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "best_d_b": self.best_d_b,
            "initial_d_b": self.initial_d_b,
            "n_criterion_evaluations": self.n_criterion_evaluations,
            "n_iterations": self.n_iterations,
            "n_reheats": self.n_reheats,
            "wall_time": self.wall_time,
            "stop_reason": self.stop_reason,
            "T0": self.T0,
            "seed": self.seed,
        }
