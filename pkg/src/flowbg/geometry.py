"""Particle configurations and the symmetry group acting on them.

A configuration is a plain ``(K, D)`` float64 array of particle positions,
``K >= 2`` particles in ``D in {2, 3}`` dimensions.  The symmetry group is
generated by particle relabelings, proper rotations, and rigid translations;
each variant is a small frozen dataclass validated on construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "Permutation",
    "Rotation",
    "Translation",
    "GroupElement",
    "as_configuration",
    "apply_group",
    "compose",
    "remove_mean",
    "require_mean_free",
    "pairwise_distances",
    "random_group_element",
]

_ORTHO_TOL = 1e-12


def as_configuration(x) -> np.ndarray:
    """Validate and return ``x`` as a ``(K, D)`` float64 configuration.

    Raises ``ValueError`` for wrong rank, K < 2, D not in {2, 3}, or
    non-finite coordinates.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"configuration must be a (K, D) array, got shape {x.shape}")
    K, D = x.shape
    if K < 2:
        raise ValueError(f"need at least 2 particles, got K={K}")
    if D not in (2, 3):
        raise ValueError(f"spatial dimension must be 2 or 3, got D={D}")
    if not np.all(np.isfinite(x)):
        raise ValueError("configuration contains non-finite coordinates")
    return x


@dataclass(frozen=True)
class Permutation:
    """Row relabeling: ``apply`` returns ``x[perm]``."""

    perm: np.ndarray

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.intp)
        object.__setattr__(self, "perm", perm)
        if perm.ndim != 1 or not np.array_equal(np.sort(perm), np.arange(perm.size)):
            raise ValueError("perm must be a bijection on {0..K-1}")


@dataclass(frozen=True)
class Rotation:
    """Proper rotation: each row x_i maps to R @ x_i."""

    matrix: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.matrix, dtype=np.float64)
        object.__setattr__(self, "matrix", R)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise ValueError("rotation matrix must be square")
        eye = np.eye(R.shape[0])
        if np.max(np.abs(R.T @ R - eye)) > _ORTHO_TOL:
            raise ValueError("rotation matrix is not orthogonal within 1e-12")
        if abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation matrix must have determinant +1")


@dataclass(frozen=True)
class Translation:
    """Rigid shift: each row x_i maps to x_i + v."""

    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        object.__setattr__(self, "vector", v)
        if v.ndim != 1:
            raise ValueError("translation vector must be 1-D")
        if not np.all(np.isfinite(v)):
            raise ValueError("translation vector must be finite")


GroupElement = Union[Permutation, Rotation, Translation]


def apply_group(g: GroupElement, x: np.ndarray) -> np.ndarray:
    """Apply a group element to a configuration (returns a new array)."""
    x = as_configuration(x)
    K, D = x.shape
    if isinstance(g, Permutation):
        if g.perm.size != K:
            raise ValueError(f"permutation acts on {g.perm.size} rows, configuration has {K}")
        return x[g.perm]
    if isinstance(g, Rotation):
        if g.matrix.shape[0] != D:
            raise ValueError(f"rotation is {g.matrix.shape[0]}-dimensional, configuration is {D}-dimensional")
        return x @ g.matrix.T
    if isinstance(g, Translation):
        if g.vector.size != D:
            raise ValueError(f"translation is {g.vector.size}-dimensional, configuration is {D}-dimensional")
        return x + g.vector
    raise TypeError(f"unknown group element {type(g).__name__}")


def compose(g: GroupElement, h: GroupElement) -> GroupElement:
    """Composition gh, i.e. apply ``h`` first: apply(compose(g,h), x) == apply(g, apply(h, x))."""
    if isinstance(g, Permutation) and isinstance(h, Permutation):
        return Permutation(h.perm[g.perm])
    if isinstance(g, Rotation) and isinstance(h, Rotation):
        return Rotation(g.matrix @ h.matrix)
    if isinstance(g, Translation) and isinstance(h, Translation):
        return Translation(g.vector + h.vector)
    raise TypeError("can only compose group elements of the same variant")


def remove_mean(x: np.ndarray) -> np.ndarray:
    """Subtract the center of mass (arithmetic mean over particles).

    Works on a single ``(K, D)`` configuration or a ``(..., K, D)`` batch.
    """
    x = np.asarray(x, dtype=np.float64)
    return x - x.mean(axis=-2, keepdims=True)


def require_mean_free(x: np.ndarray, tol: float = 1e-8, what: str = "configuration") -> None:
    """Raise ``ValueError`` if any center of mass exceeds ``tol`` in max norm."""
    x = np.asarray(x, dtype=np.float64)
    worst = np.max(np.abs(x.mean(axis=-2)))
    if worst > tol:
        raise ValueError(f"{what} is not mean-free: |center of mass| = {worst:.3e} > {tol:.1e}")


def pairwise_distances(x: np.ndarray) -> np.ndarray:
    """K x K symmetric matrix of Euclidean distances, zero diagonal."""
    x = as_configuration(x)
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt(np.einsum("ijd,ijd->ij", diff, diff))


def random_group_element(kind: str, K: int, D: int, rng: np.random.Generator) -> GroupElement:
    """Draw a random group element of the given variant.

    Rotations come from QR orthogonalization of a Gaussian matrix with the
    determinant corrected to +1; translations have i.i.d. standard normal
    entries.  The draw is a pure function of the generator state.
    """
    if kind == "permutation":
        return Permutation(rng.permutation(K))
    if kind == "rotation":
        A = rng.standard_normal((D, D))
        Q, R = np.linalg.qr(A)
        # fix the sign convention so Q is unique given A, then force det +1
        Q = Q * np.sign(np.diag(R))
        if np.linalg.det(Q) < 0:
            Q[:, -1] = -Q[:, -1]
        return Rotation(Q)
    if kind == "translation":
        return Translation(rng.standard_normal(D))
    raise ValueError(f"kind must be permutation, rotation, or translation, got {kind!r}")
