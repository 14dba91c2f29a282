"""Multi-particle energy models.

``DoubleWell`` is the pairwise double-well potential

    u(x) = sum_{i != j} a*(||x_i - x_j|| - d0)^2 + b*(||x_i - x_j|| - d0)^4

summed over ordered pairs, so each unordered pair is counted twice.  With
a < 0 < b every pair has two energy minima in distance at
d0 +/- sqrt(-a/(2b)) separated by a barrier at d0.  Gradient and Hessian
are analytic; both raise on coincident particles, where the distance is
not differentiable.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass

import numpy as np

from .errors import SingularityError
from .geometry import as_configuration

__all__ = ["EnergyModel", "DoubleWellParams", "DoubleWell", "GaussianEnergy"]


class EnergyModel(abc.ABC):
    """Energy, gradient, and Hessian of a configuration energy u(x)."""

    @abc.abstractmethod
    def energy(self, x: np.ndarray) -> float:
        ...

    @abc.abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray:
        """du/dx as a (K, D) array."""

    @abc.abstractmethod
    def hessian(self, x: np.ndarray) -> np.ndarray:
        """Second derivative as a (K*D, K*D) symmetric matrix (row-major flattening)."""

    def energy_many(self, X: np.ndarray) -> np.ndarray:
        """Energies of a (B, K, D) batch.  Subclasses may vectorize."""
        return np.array([self.energy(x) for x in X])

    def gradient_many(self, X: np.ndarray) -> np.ndarray:
        return np.stack([self.gradient(x) for x in X])


@dataclass(frozen=True)
class DoubleWellParams:
    """Pair-potential coefficients; b > 0 keeps the potential confining."""

    a: float = -4.0
    b: float = 0.9
    d0: float = 4.0

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError(f"quartic coefficient must be positive, got b={self.b}")

    def well_shift(self) -> float:
        """Distance offset |s*| of the two per-pair minima from d0."""
        return math.sqrt(-self.a / (2.0 * self.b)) if self.a < 0 else 0.0


class DoubleWell(EnergyModel):
    """Double-well pair potential over ordered particle pairs."""

    def __init__(self, params: DoubleWellParams = DoubleWellParams(), min_distance: float = 1e-10):
        self.params = params
        self.min_distance = min_distance

    # -- energy ---------------------------------------------------------

    def energy(self, x: np.ndarray) -> float:
        x = as_configuration(x)
        return float(self.energy_many(x[None])[0])

    def energy_many(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        p = self.params
        r = self._distances(X)
        iu, ju = np.triu_indices(X.shape[-2], k=1)
        s = r[..., iu, ju] - p.d0
        s2 = s * s
        # ordered double sum counts every unordered pair twice
        return 2.0 * np.sum(p.a * s2 + p.b * s2 * s2, axis=-1)

    # -- gradient ---------------------------------------------------------

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = as_configuration(x)
        return self.gradient_many(x[None])[0]

    def gradient_many(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        p = self.params
        diff = X[..., :, None, :] - X[..., None, :, :]
        r = np.sqrt(np.einsum("...ijd,...ijd->...ij", diff, diff))
        K = X.shape[-2]
        off = ~np.eye(K, dtype=bool)
        if np.any(r[..., off] < self.min_distance):
            raise SingularityError(
                f"coincident particles (pair distance < {self.min_distance:g}); gradient undefined"
            )
        s = r - p.d0
        # d/dr of the per-ordered-pair term, doubled for the two orderings
        fprime = 2.0 * (2.0 * p.a * s + 4.0 * p.b * s**3)
        w = np.where(off, fprime / np.where(r > 0, r, 1.0), 0.0)
        return np.einsum("...ij,...ijd->...id", w, diff)

    # -- hessian ----------------------------------------------------------

    def hessian(self, x: np.ndarray) -> np.ndarray:
        x = as_configuration(x)
        K, D = x.shape
        p = self.params
        H = np.zeros((K, D, K, D))
        eye = np.eye(D)
        for i in range(K):
            for j in range(i + 1, K):
                d = x[i] - x[j]
                r = float(np.linalg.norm(d))
                if r < self.min_distance:
                    raise SingularityError(
                        f"coincident particles (pair distance < {self.min_distance:g}); Hessian undefined"
                    )
                u = d / r
                s = r - p.d0
                fp = 2.0 * (2.0 * p.a * s + 4.0 * p.b * s**3)
                fpp = 2.0 * (2.0 * p.a + 12.0 * p.b * s * s)
                P = fpp * np.outer(u, u) + (fp / r) * (eye - np.outer(u, u))
                H[i, :, i, :] += P
                H[j, :, j, :] += P
                H[i, :, j, :] -= P
                H[j, :, i, :] -= P
        return H.reshape(K * D, K * D)

    @staticmethod
    def _distances(X: np.ndarray) -> np.ndarray:
        diff = X[..., :, None, :] - X[..., None, :, :]
        return np.sqrt(np.einsum("...ijd,...ijd->...ij", diff, diff))


class GaussianEnergy(EnergyModel):
    """Quadratic well whose Boltzmann density matches the mean-free prior.

    u(x) = ||x||^2 / 2 + (K-1)*D/2 * ln(2*pi), so that exp(-u) restricted to
    the mean-free subspace is exactly the prior density.  Used as the
    degenerate "perfect proposal" target in reweighting and KL checks.
    """

    def __init__(self, K: int, D: int):
        self.K = int(K)
        self.D = int(D)
        self.offset = 0.5 * (self.K - 1) * self.D * math.log(2.0 * math.pi)

    def energy(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        return float(0.5 * np.einsum("kd,kd->", x, x) + self.offset)

    def energy_many(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return 0.5 * np.einsum("...kd,...kd->...", X, X) + self.offset

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64).copy()

    def gradient_many(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64).copy()

    def hessian(self, x: np.ndarray) -> np.ndarray:
        n = np.asarray(x).size
        return np.eye(n)
