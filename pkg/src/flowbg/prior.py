"""Mean-free Gaussian prior over particle configurations.

Samples are i.i.d. standard normal positions with the center of mass
subtracted, which confines them to the mean-free subspace of dimension
``(K-1)*D``.  In any orthonormal basis of that subspace the projected
variable is again standard normal, so the exact log-density on the
subspace is ``-||z||^2 / 2 - (K-1)*D/2 * ln(2*pi)``.  The density is
invariant under particle relabeling, rotation, and translation along the
removed mean direction, which is what makes it a usable base distribution
for symmetry-preserving flows.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import require_mean_free

__all__ = ["MeanFreePrior"]


class MeanFreePrior:
    """Standard normal restricted to mean-free configurations of K particles in D dimensions."""

    def __init__(self, K: int, D: int):
        if K < 2:
            raise ValueError(f"need at least 2 particles, got K={K}")
        if D < 1:
            raise ValueError(f"dimension must be >= 1, got D={D}")
        self.K = int(K)
        self.D = int(D)
        # dimension of the mean-free subspace
        self.rank = (self.K - 1) * self.D
        self.log_normalizer = -0.5 * self.rank * math.log(2.0 * math.pi)

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        """Draw one ``(K, D)`` configuration, or ``(n, K, D)`` when ``n`` is given."""
        shape = (self.K, self.D) if n is None else (n, self.K, self.D)
        z = rng.standard_normal(shape)
        return z - z.mean(axis=-2, keepdims=True)

    def logprob(self, z: np.ndarray, mean_free_tol: float = 1e-8):
        """Exact log-density of mean-free ``z``; batched input gives a vector.

        Raises ``ValueError`` when the center of mass exceeds the tolerance:
        the formula is only a density on the mean-free subspace, and silently
        accepting off-subspace points would corrupt likelihood bookkeeping.
        """
        z = np.asarray(z, dtype=np.float64)
        if z.shape[-2:] != (self.K, self.D):
            raise ValueError(f"expected trailing shape ({self.K}, {self.D}), got {z.shape}")
        require_mean_free(z, tol=mean_free_tol, what="prior argument")
        sq = np.einsum("...kd,...kd->...", z, z)
        out = -0.5 * sq + self.log_normalizer
        return float(out) if out.ndim == 0 else out

    def grad_logprob(self, z: np.ndarray) -> np.ndarray:
        """Gradient of the log-density with respect to ``z`` (simply ``-z``)."""
        return -np.asarray(z, dtype=np.float64)
