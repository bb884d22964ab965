"""Incremental evaluation of the Bayesian D-criterion under single choice-set changes."""

from __future__ import annotations

import numpy as np

from ..bayes import DrawSet
from ..design import DesignSpec, code_profiles
from . import _kernels


class CriterionTracker:
    """Per-draw information matrices of a current design, updated one choice set at a time.

    ``propose(s, block)`` scores the design with choice set ``s`` replaced by
    ``block`` and remembers the candidate; ``commit()`` makes it current. On
    commit each draw's information matrix gets the new set's contribution
    added and the old one removed, and is refactored. Everything is rebuilt
    from scratch every ``refresh_every`` commits and on :meth:`refresh`.
    """

    def __init__(self, design: np.ndarray, spec: DesignSpec, draws: DrawSet, refresh_every: int = 10_000):
        self.spec = spec
        self.weights = draws.weights
        self.betas = np.ascontiguousarray(draws.betas, dtype=np.float64)
        self.refresh_every = refresh_every
        self.design = np.array(design, dtype=np.int64)
        self._strides = np.cumprod((spec.levels[1:] + (1,))[::-1])[::-1].astype(np.int64)
        self._table = spec.profile_codes
        self.codes = code_profiles(self.design, spec)
        n, m = self.betas.shape
        self.M = np.zeros((n, m, m))
        self.L = np.zeros((n, m, m))
        self.logdet = np.empty(n)
        self._out = np.empty(n)
        self._pending = None
        self.n_refreshes = 0
        self.refresh()

    def block_codes(self, block: np.ndarray) -> np.ndarray:
        """Coded rows ``(J, m)`` of one choice set given as ``(J, K)`` levels."""
        return self._table[(np.asarray(block) - 1) @ self._strides]

    def _value(self, logdet: np.ndarray) -> float:
        # weights are positive, so a single -inf node makes the sum -inf
        return float(np.dot(self.weights, logdet))

    def refresh(self) -> float:
        """Recompute all information matrices from the current design."""
        diffs = np.ascontiguousarray(self.codes[:, :-1, :] - self.codes[:, -1:, :])
        _kernels.full_information(diffs, self.betas, self.M, self.L, self.logdet)
        self.value = self._value(self.logdet)
        self.n_updates = 0
        self.n_refreshes += 1
        self._pending = None
        return self.value

    def propose(self, s: int, block: np.ndarray) -> float:
        """Criterion value of the current design with set ``s`` replaced by ``block`` (levels)."""
        new_codes = self.block_codes(block)
        old_codes = self.codes[s]
        d_old = np.ascontiguousarray(old_codes[:-1] - old_codes[-1])
        d_new = np.ascontiguousarray(new_codes[:-1] - new_codes[-1])
        out = self._out
        if self.spec.n_alts == 2:
            n_bad = _kernels.propose_pair(self.L, self.logdet, self.betas, d_old[0], d_new[0], out)
        else:
            _kernels.propose_chol(self.L, self.logdet, self.betas, d_old, d_new, out)
            n_bad = 1
        if n_bad:
            bad = np.flatnonzero(np.isnan(out))
            if bad.size:
                _kernels.propose_direct(self.M, self.betas, d_old, d_new, bad, out)
        value = self._value(out)
        self._pending = (s, np.array(block), new_codes, d_old, d_new)
        return value

    def commit(self) -> float:
        """Make the last proposed candidate the current design."""
        if self._pending is None:
            raise RuntimeError("nothing proposed")
        s, block, new_codes, d_old, d_new = self._pending
        self._pending = None
        self.design[s] = block
        self.codes[s] = new_codes
        if self.spec.n_alts == 2:
            _kernels.commit_pair(self.M, self.L, self.logdet, self.betas, d_old[0], d_new[0])
        else:
            _kernels.commit_update(self.M, self.L, self.logdet, self.betas, d_old, d_new)
        self.value = self._value(self.logdet)
        self.n_updates += 1
        if self.n_updates >= self.refresh_every:
            self.refresh()
        return self.value
