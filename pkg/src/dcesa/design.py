"""Choice designs: problem dimensions, effects coding, random designs and neighborhood moves.

A design is an integer array of shape ``(S, J, K)`` holding 1-based attribute
levels: ``design[s, j, k]`` is the level of attribute ``k`` in alternative ``j``
of choice set ``s``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .rng import as_generator


class InvalidDesignError(ValueError):
    """Raised when a profile or design is inconsistent with its DesignSpec."""


@dataclass(frozen=True)
class DesignSpec:
    """Dimensions of a choice-design problem.

    Parameters
    ----------
    levels : tuple of int
        Number of levels of each attribute (each >= 2).
    n_sets : int
        Number of choice sets S.
    n_alts : int
        Alternatives per choice set J.
    """

    levels: tuple[int, ...]
    n_sets: int
    n_alts: int

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(int(v) for v in self.levels))
        if len(self.levels) == 0:
            raise InvalidDesignError("at least one attribute is required")
        if any(v < 2 for v in self.levels):
            raise InvalidDesignError(f"every attribute needs >= 2 levels, got {self.levels}")
        if self.n_sets < 1:
            raise InvalidDesignError(f"n_sets must be >= 1, got {self.n_sets}")
        if self.n_alts < 2:
            raise InvalidDesignError(f"n_alts must be >= 2, got {self.n_alts}")

    @property
    def n_attributes(self) -> int:
        return len(self.levels)

    @property
    def m(self) -> int:
        """Number of model parameters, sum of (levels - 1)."""
        return sum(v - 1 for v in self.levels)

    @property
    def n_profiles(self) -> int:
        return int(np.prod(self.levels))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_sets, self.n_alts, self.n_attributes)

    @cached_property
    def column_slices(self) -> tuple[slice, ...]:
        """Columns of the model matrix belonging to each attribute."""
        bounds = np.concatenate([[0], np.cumsum([v - 1 for v in self.levels])])
        return tuple(slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]))

    @cached_property
    def coding_tables(self) -> tuple[np.ndarray, ...]:
        """Per attribute, an ``(L, L-1)`` table whose row ``l-1`` codes level ``l``."""
        tables = []
        for n_levels in self.levels:
            table = np.vstack([np.eye(n_levels - 1), -np.ones((1, n_levels - 1))])
            table.setflags(write=False)
            tables.append(table)
        return tuple(tables)

    @cached_property
    def profile_codes(self) -> np.ndarray:
        """Effects coding of every profile, ``(P, m)``, profiles in lexicographic order."""
        grid = all_profiles(self)
        return code_profiles(grid, self)

    def to_dict(self) -> dict:
        return {"levels": list(self.levels), "n_sets": self.n_sets, "n_alts": self.n_alts}


def effects_code_profile(profile: Sequence[int], spec: DesignSpec) -> np.ndarray:
    """Effects-code one profile (K levels, 1-based) into an m-vector.

    Level ``l < L`` of an ``L``-level attribute maps to the unit vector ``e_l``;
    the last level maps to all ``-1``.
    """
    profile = np.asarray(profile)
    if profile.shape != (spec.n_attributes,):
        raise InvalidDesignError(
            f"profile must have {spec.n_attributes} entries, got shape {profile.shape}"
        )
    _check_levels(profile, spec)
    out = np.empty(spec.m)
    for k, (cols, table) in enumerate(zip(spec.column_slices, spec.coding_tables)):
        out[cols] = table[int(profile[k]) - 1]
    return out


def code_profiles(profiles: np.ndarray, spec: DesignSpec) -> np.ndarray:
    """Vectorised effects coding of an ``(..., K)`` array of profiles into ``(..., m)``."""
    profiles = np.asarray(profiles)
    out = np.empty(profiles.shape[:-1] + (spec.m,))
    for k, (cols, table) in enumerate(zip(spec.column_slices, spec.coding_tables)):
        out[..., cols] = table[profiles[..., k] - 1]
    return out


def code_design(design: np.ndarray, spec: DesignSpec) -> np.ndarray:
    """Model matrix of a design, shape ``(S*J, m)``; rows ordered by set then alternative."""
    design = validate_design(design, spec)
    return code_profiles(design, spec).reshape(spec.n_sets * spec.n_alts, spec.m)


def as_blocks(X: np.ndarray, n_alts: int) -> np.ndarray:
    """View a ``(S*J, m)`` model matrix as ``(S, J, m)`` choice-set blocks."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 3:
        if X.shape[1] != n_alts:
            raise InvalidDesignError(f"blocks have {X.shape[1]} alternatives, expected {n_alts}")
        return X
    if X.ndim != 2 or X.shape[0] % n_alts:
        raise InvalidDesignError(f"model matrix of shape {X.shape} is not divisible into sets of {n_alts}")
    return X.reshape(X.shape[0] // n_alts, n_alts, X.shape[1])


def validate_design(design: np.ndarray, spec: DesignSpec) -> np.ndarray:
    design = np.asarray(design)
    if design.shape != spec.shape:
        raise InvalidDesignError(f"design has shape {design.shape}, expected {spec.shape}")
    if not np.issubdtype(design.dtype, np.integer):
        if not np.all(np.equal(np.mod(design, 1), 0)):
            raise InvalidDesignError("design levels must be integers")
        design = design.astype(np.int64)
    _check_levels(design, spec)
    return design


def _check_levels(arr: np.ndarray, spec: DesignSpec) -> None:
    upper = np.asarray(spec.levels)
    bad = (arr < 1) | (arr > upper)
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise InvalidDesignError(
            f"level {arr[idx]} at position {idx} outside 1..{upper[idx[-1]]}"
        )


def all_profiles(spec: DesignSpec) -> np.ndarray:
    """Every profile in lexicographic order, ``(P, K)`` 1-based."""
    grids = np.indices(spec.levels).reshape(spec.n_attributes, -1).T
    return grids + 1


def profile_index(profile: np.ndarray, spec: DesignSpec) -> int:
    return int(np.ravel_multi_index(tuple(np.asarray(profile) - 1), spec.levels))


def profile_from_index(index: int, spec: DesignSpec) -> np.ndarray:
    return np.asarray(np.unravel_index(index, spec.levels)) + 1


def random_design(spec: DesignSpec, seed=None) -> np.ndarray:
    """Design with every cell drawn uniformly over its attribute's levels."""
    rng = as_generator(seed)
    upper = np.asarray(spec.levels)
    return rng.integers(1, upper + 1, size=spec.shape)


def neighbor_attribute(design: np.ndarray, spec: DesignSpec, rng) -> tuple[np.ndarray, int]:
    """Change the level of one attribute in one profile.

    The cell is chosen uniformly and the new level uniformly among the other
    levels of that attribute. Returns the new design and the changed set index.
    """
    rng = as_generator(rng)
    s = int(rng.integers(spec.n_sets))
    j = int(rng.integers(spec.n_alts))
    k = int(rng.integers(spec.n_attributes))
    old = int(design[s, j, k])
    new = int(rng.integers(1, spec.levels[k]))
    if new >= old:
        new += 1
    out = design.copy()
    out[s, j, k] = new
    return out, s


def neighbor_profile(design: np.ndarray, spec: DesignSpec, rng) -> tuple[np.ndarray, int]:
    """Replace one profile by a uniformly drawn different profile."""
    rng = as_generator(rng)
    s = int(rng.integers(spec.n_sets))
    j = int(rng.integers(spec.n_alts))
    current = profile_index(design[s, j], spec)
    new = int(rng.integers(spec.n_profiles - 1))
    if new >= current:
        new += 1
    out = design.copy()
    out[s, j] = profile_from_index(new, spec)
    return out, s


NEIGHBORHOODS = {"attribute": neighbor_attribute, "profile": neighbor_profile}
