"""Multinomial logit: probabilities, Fisher information, choice simulation and ML fitting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .design import DesignSpec, as_blocks, code_design
from .rng import as_generator


class NumericalError(ArithmeticError):
    pass


class NonIdentifiableError(NumericalError):
    """The model matrix cannot identify all parameters (singular information)."""


SINGULAR_PIVOT_RTOL = 1e-12
SYMMETRY_ATOL = 1e-12


def choice_probabilities(Xs: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """MNL probabilities of the alternatives of one choice set (``Xs`` is ``(J, m)``)."""
    u = np.asarray(Xs, dtype=float) @ np.asarray(beta, dtype=float)
    if not np.all(np.isfinite(u)):
        raise NumericalError("non-finite utility")
    u = u - u.max()
    e = np.exp(u)
    return e / e.sum()


def _probabilities(blocks: np.ndarray, beta: np.ndarray) -> np.ndarray:
    # blocks (..., J, m); beta (m,) or broadcastable (..., m)
    u = np.einsum("...jm,...m->...j", blocks, beta)
    u = u - u.max(axis=-1, keepdims=True)
    e = np.exp(u)
    return e / e.sum(axis=-1, keepdims=True)


def set_information(Xs: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Information contribution ``Xs' (P - p p') Xs`` of one choice set."""
    Xs = np.asarray(Xs, dtype=float)
    p = choice_probabilities(Xs, beta)
    centered = Xs - p @ Xs
    return (centered * p[:, None]).T @ centered


def information_matrix(X: np.ndarray, beta: np.ndarray, n_alts: int | None = None) -> np.ndarray:
    """Fisher information ``M(X, beta)`` summed over choice sets.

    ``X`` is either the ``(S*J, m)`` model matrix (then ``n_alts`` is required)
    or an ``(S, J, m)`` array of blocks.
    """
    blocks = np.asarray(X, dtype=float) if n_alts is None else as_blocks(X, n_alts)
    if blocks.ndim != 3:
        raise ValueError("pass n_alts with a 2-d model matrix")
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (blocks.shape[-1],):
        raise ValueError(f"beta has shape {beta.shape}, expected ({blocks.shape[-1]},)")
    p = _probabilities(blocks, beta)
    centered = blocks - np.einsum("sj,sjm->sm", p, blocks)[:, None, :]
    M = np.einsum("sj,sja,sjb->ab", p, centered, centered)
    return 0.5 * (M + M.T)


def information_matrices(blocks: np.ndarray, betas: np.ndarray) -> np.ndarray:
    """Information matrices for many parameter vectors at once, ``(D, m, m)``."""
    blocks = np.asarray(blocks, dtype=float)
    betas = np.atleast_2d(np.asarray(betas, dtype=float))
    u = np.einsum("sjm,dm->dsj", blocks, betas)
    u -= u.max(axis=-1, keepdims=True)
    p = np.exp(u)
    p /= p.sum(axis=-1, keepdims=True)
    mean = np.einsum("dsj,sjm->dsm", p, blocks)
    # sum_j p x x' - xbar xbar'
    second = np.einsum("dsj,sja,sjb->dab", p, blocks, blocks)
    M = second - np.einsum("dsa,dsb->dab", mean, mean)
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def update_information_matrix(
    M: np.ndarray, old_set: np.ndarray, new_set: np.ndarray, beta: np.ndarray
) -> np.ndarray:
    """Swap one choice set's contribution in ``M`` for another's."""
    M = np.asarray(M, dtype=float)
    old_set = np.asarray(old_set, dtype=float)
    new_set = np.asarray(new_set, dtype=float)
    if old_set.shape != new_set.shape or old_set.shape[1] != M.shape[0]:
        raise ValueError(
            f"incompatible shapes: M {M.shape}, old {old_set.shape}, new {new_set.shape}"
        )
    if np.array_equal(old_set, new_set):
        return M.copy()
    return M - set_information(old_set, beta) + set_information(new_set, beta)


def log_det_information(M: np.ndarray) -> float:
    """``log|M|`` via Cholesky; ``-inf`` when ``M`` is singular or not positive definite."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if np.max(np.abs(M - M.T)) > SYMMETRY_ATOL * scale:
        raise NumericalError("information matrix is not symmetric")
    return float(log_det_batch(M[None])[0])


def log_det_batch(Ms: np.ndarray) -> np.ndarray:
    """Log-determinants of a stack of symmetric matrices, ``-inf`` for singular ones."""
    Ms = np.asarray(Ms, dtype=float)
    m = Ms.shape[-1]
    trace_scale = np.trace(Ms, axis1=-2, axis2=-1) / m
    out = np.full(Ms.shape[0], -np.inf)
    try:
        L = np.linalg.cholesky(Ms)
        ok = np.ones(Ms.shape[0], dtype=bool)
    except np.linalg.LinAlgError:
        L = np.zeros_like(Ms)
        ok = np.zeros(Ms.shape[0], dtype=bool)
        for i, Mi in enumerate(Ms):
            try:
                L[i] = np.linalg.cholesky(Mi)
                ok[i] = True
            except np.linalg.LinAlgError:
                pass
    pivots = np.diagonal(L, axis1=-2, axis2=-1) ** 2
    ok &= trace_scale > 0
    ok &= np.all(pivots > SINGULAR_PIVOT_RTOL * trace_scale[:, None], axis=-1)
    out[ok] = np.sum(np.log(pivots[ok]), axis=-1)
    return out


@dataclass(frozen=True)
class ChoiceData:
    """Simulated responses: ``choices[r, s]`` is the 1-based alternative picked by respondent r in set s."""

    choices: np.ndarray
    n_alts: int

    def __post_init__(self):
        c = np.asarray(self.choices)
        if c.ndim != 2 or c.shape[0] < 1:
            raise ValueError("choices must be a non-empty (R, S) array")
        if np.any((c < 1) | (c > self.n_alts)):
            raise ValueError(f"choices must lie in 1..{self.n_alts}")

    @property
    def n_respondents(self) -> int:
        return self.choices.shape[0]

    def counts(self) -> np.ndarray:
        """``(S, J)`` number of respondents choosing each alternative."""
        S = self.choices.shape[1]
        out = np.zeros((S, self.n_alts))
        np.add.at(out, (np.broadcast_to(np.arange(S), self.choices.shape), self.choices - 1), 1)
        return out


def simulate_choices(
    design: np.ndarray,
    spec: DesignSpec,
    beta_true: np.ndarray,
    n_respondents: int,
    seed=None,
) -> ChoiceData:
    """Draw each respondent's choice in every set from the MNL probabilities."""
    if n_respondents < 1:
        raise ValueError("n_respondents must be >= 1")
    blocks = as_blocks(code_design(design, spec), spec.n_alts)
    p = _probabilities(blocks, np.asarray(beta_true, dtype=float))
    cum = np.cumsum(p, axis=1)
    cum[:, -1] = 1.0
    rng = as_generator(seed)
    u = rng.random((n_respondents, spec.n_sets))
    choices = (u[:, :, None] >= cum[None, :, :]).sum(axis=2) + 1
    return ChoiceData(choices=np.minimum(choices, spec.n_alts), n_alts=spec.n_alts)


@dataclass
class FitResult:
    beta_hat: np.ndarray
    covariance: np.ndarray
    standard_errors: np.ndarray
    t_ratios: np.ndarray
    converged: bool
    log_likelihood: float
    n_iter: int
    status: str = "converged"


def log_likelihood(beta: np.ndarray, counts: np.ndarray, blocks: np.ndarray) -> float:
    """MNL log-likelihood from ``(S, J)`` choice counts."""
    u = blocks @ beta
    return float(np.sum(counts * (u - logsumexp(u, axis=1, keepdims=True))))


def score(beta: np.ndarray, counts: np.ndarray, blocks: np.ndarray) -> np.ndarray:
    """Gradient of :func:`log_likelihood`."""
    p = _probabilities(blocks, beta)
    n = counts.sum(axis=1)
    return np.einsum("sj,sjm->m", counts - n[:, None] * p, blocks)


def hessian(beta: np.ndarray, counts: np.ndarray, blocks: np.ndarray) -> np.ndarray:
    """Hessian of :func:`log_likelihood`; equals ``-R M(X, beta)`` for R respondents per set."""
    n = counts.sum(axis=1)
    p = _probabilities(blocks, beta)
    centered = blocks - np.einsum("sj,sjm->sm", p, blocks)[:, None, :]
    H = -np.einsum("s,sj,sja,sjb->ab", n, p, centered, centered)
    return 0.5 * (H + H.T)


def _is_positive_definite(H: np.ndarray) -> bool:
    return bool(np.isfinite(log_det_batch(H[None])[0]))


def fit_mnl(
    data: ChoiceData,
    X: np.ndarray,
    spec: DesignSpec,
    *,
    tol: float = 1e-8,
    max_iter: int = 100,
    max_abs_beta: float = 50.0,
) -> FitResult:
    """Maximum-likelihood MNL fit by Newton's method with step halving.

    Fits that run off to ``|beta| > max_abs_beta`` (separation) or hit a singular
    Hessian are returned with ``converged=False`` rather than raising.

    Raises
    ------
    NonIdentifiableError
        If the information matrix is singular at the starting point ``beta = 0``,
        meaning the design itself cannot identify the parameters.
    """
    blocks = as_blocks(X, spec.n_alts)
    counts = data.counts()
    if counts.shape != blocks.shape[:2]:
        raise ValueError(f"choice data covers {counts.shape[0]} sets, design has {blocks.shape[0]}")
    m = blocks.shape[-1]
    beta = np.zeros(m)
    if not _is_positive_definite(-hessian(beta, counts, blocks)):
        raise NonIdentifiableError("information matrix is singular at beta = 0")
    ll = log_likelihood(beta, counts, blocks)
    nan = np.full(m, np.nan)
    status = "max_iter"
    n_iter = 0
    for n_iter in range(max_iter + 1):
        g = score(beta, counts, blocks)
        if np.max(np.abs(g)) < tol:
            status = "converged"
            break
        if n_iter == max_iter:
            break
        H = -hessian(beta, counts, blocks)
        if not _is_positive_definite(H):
            status = "singular"
            break
        step = np.linalg.solve(H, g)
        for _ in range(20):
            trial = beta + step
            ll_trial = log_likelihood(trial, counts, blocks)
            if ll_trial >= ll - 1e-12 * abs(ll):
                break
            step *= 0.5
        beta, ll = trial, ll_trial
        if np.max(np.abs(beta)) > max_abs_beta:
            status = "separation"
            break

    if status != "converged":
        return FitResult(beta, np.full((m, m), np.nan), nan, nan, False, ll, n_iter, status)
    info = -hessian(beta, counts, blocks)
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        return FitResult(beta, np.full((m, m), np.nan), nan, nan, False, ll, n_iter, "singular")
    var = np.diag(cov)
    if np.any(~np.isfinite(var)) or np.any(var <= 0):
        return FitResult(beta, cov, nan, nan, False, ll, n_iter, "singular")
    se = np.sqrt(var)
    return FitResult(beta, cov, se, beta / se, True, ll, n_iter, status)
