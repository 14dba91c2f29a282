"""Shared contract for the two flow models.

Both flows are invertible maps with exact log-densities satisfying

    logprob(x) = prior_logprob(inverse(x).z) + inverse(x).dlogdet

and expose tape-based reverse-mode hooks used by the trainer: a tape
records one forward or inverse pass, and the backward methods accumulate
parameter gradients for user-supplied adjoints into ``params.grads``.
"""

from __future__ import annotations

import abc

import numpy as np

from .params import ParamStore

__all__ = ["FlowModel"]


class FlowModel(abc.ABC):
    name: str
    params: ParamStore

    @abc.abstractmethod
    def hyperparams(self) -> dict:
        """Constructor arguments needed to rebuild the model (checkpoint schema)."""

    @abc.abstractmethod
    def forward(self, z):
        """Map prior-space z to sample space: returns (x, dlogdet)."""

    @abc.abstractmethod
    def inverse(self, x):
        """Map sample space back to prior space: returns (z, dlogdet)."""

    @abc.abstractmethod
    def logprob(self, x) -> float:
        ...

    @abc.abstractmethod
    def logprob_many(self, X) -> np.ndarray:
        ...

    @abc.abstractmethod
    def sample(self, rng):
        """Draw one sample: returns (x, logq)."""

    @abc.abstractmethod
    def sample_many(self, rng, n):
        """Draw n samples: returns (X, logq) arrays."""

    # -- training hooks ----------------------------------------------------

    @abc.abstractmethod
    def logprob_with_tape(self, X):
        """Batched logprob plus a tape for ``backward_logprob``."""

    @abc.abstractmethod
    def backward_logprob(self, tape, scales) -> None:
        """Accumulate sum_b scales[b] * d logprob(x_b)/dtheta into params.grads."""

    @abc.abstractmethod
    def sample_with_tape(self, rng, n):
        """Batched sampling plus a tape for ``backward_sample``: (X, logq, tape)."""

    @abc.abstractmethod
    def backward_sample(self, tape, adjoint_x, adjoint_logq) -> None:
        """Accumulate d(sum_b adjoint_x[b].x_b + adjoint_logq[b]*logq_b)/dtheta."""
