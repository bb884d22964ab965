"""Priors on the MNL parameters, draw sets approximating the prior, and the Bayesian D-criterion."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import helmert
from scipy.special import roots_genlaguerre

from .design import DesignSpec, as_blocks
from .mnl import information_matrices, log_det_batch
from .rng import as_generator


class InvalidParameterError(ValueError):
    pass


class UndefinedEfficiencyError(ValueError):
    pass


@dataclass(frozen=True)
class Prior:
    """Gaussian prior ``N(mean, covariance)`` on beta."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise InvalidParameterError(
                f"covariance shape {cov.shape} does not match mean of length {mean.size}"
            )
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-12:
            raise InvalidParameterError("prior covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def m(self) -> int:
        return self.mean.size

    def cholesky(self) -> np.ndarray:
        try:
            return np.linalg.cholesky(self.covariance)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("prior covariance is not positive definite") from exc


def prior_family(lam: float, kappa: float, spec: DesignSpec) -> Prior:
    """Prior with mean ``-lam`` on each attribute's first level and 0 on the middle level.

    Defined for 2- and 3-level attributes: a 2-level attribute gets mean ``-lam``
    and variance ``kappa**2``; a 3-level attribute gets mean ``(-lam, 0)`` and a
    2x2 block with ``kappa**2`` on the diagonal and ``-0.5 * kappa**2`` off it.
    """
    if not (lam > 0 and kappa > 0):
        raise InvalidParameterError(f"lambda and kappa must be positive, got {lam}, {kappa}")
    mean, blocks = [], []
    for n_levels in spec.levels:
        if n_levels == 2:
            mean.append(-lam)
            blocks.append(np.array([[kappa**2]]))
        elif n_levels == 3:
            mean.extend([-lam, 0.0])
            blocks.append(kappa**2 * np.array([[1.0, -0.5], [-0.5, 1.0]]))
        else:
            raise InvalidParameterError(
                f"prior family is defined for 2- and 3-level attributes only, got {n_levels}"
            )
    cov = np.zeros((spec.m, spec.m))
    for cols, block in zip(spec.column_slices, blocks):
        cov[cols, cols] = block
    return Prior(np.array(mean), cov)


def load_prior(source, spec: DesignSpec | None = None) -> Prior:
    """Read a prior from a JSON file path or an already-parsed dict.

    Accepts ``{"mean": [...], "covariance": [[...]]}`` (``"covariance": "identity"``
    is shorthand for the identity matrix) or ``{"family": {"lambda": ..., "kappa": ...}}``
    (the latter needs ``spec``).
    """
    doc = source if isinstance(source, dict) else json.loads(Path(source).read_text())
    if "family" in doc:
        if spec is None:
            raise InvalidParameterError("a family prior needs the design spec")
        fam = doc["family"]
        prior = prior_family(float(fam["lambda"]), float(fam["kappa"]), spec)
        if "mean" in doc and not np.allclose(doc["mean"], prior.mean):
            raise InvalidParameterError("'mean' disagrees with the family prior")
        return prior
    if "mean" not in doc or "covariance" not in doc:
        raise InvalidParameterError("prior needs 'mean' and 'covariance', or 'family'")
    mean, cov = np.asarray(doc["mean"], dtype=float), doc["covariance"]
    if isinstance(cov, str):
        if cov != "identity":
            raise InvalidParameterError(f"covariance must be a matrix or 'identity', got {cov!r}")
        cov = np.eye(mean.size)
    prior = Prior(mean, np.asarray(cov, dtype=float))
    if spec is not None and prior.m != spec.m:
        raise InvalidParameterError(f"prior has dimension {prior.m}, problem has m = {spec.m}")
    return prior


@dataclass(frozen=True)
class DrawSet:
    """Weighted parameter vectors approximating an expectation under the prior."""

    weights: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        b = np.atleast_2d(np.asarray(self.betas, dtype=float))
        if w.size < 1 or b.shape[0] != w.size:
            raise InvalidParameterError("need at least one draw and one weight per draw")
        if np.any(w <= 0):
            raise InvalidParameterError("weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidParameterError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "betas", b)

    def __len__(self) -> int:
        return self.weights.size

    @property
    def m(self) -> int:
        return self.betas.shape[1]

    def expect(self, f) -> float:
        """Weighted sum of ``f(beta)`` over the draws."""
        return float(sum(w * f(b) for w, b in zip(self.weights, self.betas)))

    @classmethod
    def point(cls, beta) -> "DrawSet":
        """Degenerate draw set at a single parameter vector (local D-optimality)."""
        return cls(np.ones(1), np.asarray(beta, dtype=float)[None, :])


def _normalized(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    w = w / w.sum()
    # absorb the last rounding error so the sum is 1 to within an ulp or two
    w[-1] = 1.0 - w[:-1].sum()
    return w


def draws_monte_carlo(prior: Prior, n: int, seed=None) -> DrawSet:
    """``n`` equally weighted draws ``mean + L z``."""
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    L = prior.cholesky()
    z = as_generator(seed).standard_normal((n, prior.m))
    return DrawSet(_normalized(np.ones(n)), prior.mean + z @ L.T)


def simplex_vertices(dim: int) -> np.ndarray:
    """The ``dim + 1`` unit vertices of a regular simplex centred at the origin, ``(dim+1, dim)``."""
    # columns of the Helmert submatrix are the centred basis vectors projected to R^dim
    V = helmert(dim + 1).T
    return V / np.linalg.norm(V, axis=1, keepdims=True)


def random_rotation(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def radial_rule(n_radial: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Radii and weights for ``E[g(|z|)]``, ``z ~ N(0, I_dim)``.

    With ``t = r**2 / 2`` the radial density is proportional to
    ``t**(dim/2 - 1) exp(-t)``, so generalized Gauss-Laguerre nodes apply.
    """
    t, w = roots_genlaguerre(n_radial, dim / 2.0 - 1.0)
    return np.sqrt(2.0 * t), w / w.sum()


def draws_spherical_radial(
    prior: Prior, n_radial: int = 3, n_rotations: int = 10, seed=None
) -> DrawSet:
    """Spherical-radial quadrature for the Gaussian prior.

    Nodes are ``mean + L (r * Q u)`` for Gauss-Laguerre radii ``r``, the
    ``2(m+1)`` points ``u = +-v_i`` of the extended simplex, and ``n_rotations``
    random orthogonal ``Q``. Exact for polynomials of degree <= 2 (degree 3 too
    by symmetry).
    """
    if n_radial < 1 or n_rotations < 1:
        raise InvalidParameterError("n_radial and n_rotations must be >= 1")
    m = prior.m
    L = prior.cholesky()
    rng = as_generator(seed)
    radii, radial_w = radial_rule(n_radial, m)
    V = simplex_vertices(m)
    directions = np.vstack([V, -V])
    betas, weights = [], []
    for _ in range(n_rotations):
        Q = random_rotation(m, rng)
        U = directions @ Q.T
        for r, wr in zip(radii, radial_w):
            betas.append(prior.mean + (r * U) @ L.T)
            weights.append(np.full(len(U), wr / (len(U) * n_rotations)))
    return DrawSet(_normalized(np.concatenate(weights)), np.vstack(betas))


def make_draws(prior: Prior, method: str = "spherical_radial", seed=None, **params) -> DrawSet:
    if method == "spherical_radial":
        return draws_spherical_radial(
            prior, params.get("n_radial", 3), params.get("n_rotations", 10), seed
        )
    if method == "monte_carlo":
        return draws_monte_carlo(prior, params.get("n", 1000), seed)
    if method == "point":
        return DrawSet.point(prior.mean)
    raise InvalidParameterError(f"unknown draw method {method!r}")


def node_log_dets(X: np.ndarray, draws: DrawSet, n_alts: int | None = None) -> np.ndarray:
    """Per-node ``log|M(X, beta_i)|``; ``X`` is ``(S, J, m)`` blocks, or ``(S*J, m)`` with ``n_alts``."""
    X = np.asarray(X, dtype=float)
    if n_alts is None and X.ndim != 3:
        raise ValueError("a stacked (S*J, m) model matrix needs n_alts")
    blocks = X if n_alts is None else as_blocks(X, n_alts)
    if blocks.shape[-1] != draws.m:
        raise ValueError(f"model matrix has {blocks.shape[-1]} columns, draws have m = {draws.m}")
    out = np.empty(len(draws))
    # chunk to bound memory for large Monte Carlo sets
    step = 4096
    for a in range(0, len(draws), step):
        out[a : a + step] = log_det_batch(information_matrices(blocks, draws.betas[a : a + step]))
    return out


def bayesian_d(X: np.ndarray, draws: DrawSet, n_alts: int | None = None) -> float:
    """Prior-weighted average of ``log|M(X, beta)|``; ``-inf`` if any node is singular."""
    ld = node_log_dets(X, draws, n_alts)
    if np.any(np.isneginf(ld)):
        return -np.inf
    return float(np.dot(draws.weights, ld))


def relative_efficiency(d_b_x: float, d_b_xstar: float, m: int) -> float:
    """Relative D_B-efficiency ``exp((D_B(X) - D_B(X*)) / m)`` of X with respect to X*."""
    if not (np.isfinite(d_b_x) and np.isfinite(d_b_xstar)):
        raise UndefinedEfficiencyError("efficiency is undefined for singular designs")
    return float(np.exp((d_b_x - d_b_xstar) / m))
