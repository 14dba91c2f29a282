"""Learnable scalar function of pair distance.

``RadialNet`` is a radial-basis expansion

    psi(r) = c + sum_m w_m * exp(-(r - mu_m)^2 / (2 sigma^2))

with fixed centers on a uniform grid over [0, r_max] and fixed bandwidth
equal to the grid spacing.  Weights and bias live in a ``ParamStore``.
Value, first and second distance-derivatives, and parameter gradients are
all analytic, which keeps downstream divergence formulas exact.  The
zero-initialized net is identically zero, so a flow driven by it starts as
the identity map.
"""

from __future__ import annotations

import numpy as np

from .params import ParamStore

__all__ = ["RadialNet"]


class RadialNet:
    def __init__(self, M: int = 32, r_max: float = 8.0, store: ParamStore | None = None, prefix: str = "psi"):
        if M < 1:
            raise ValueError("need at least one basis function")
        if r_max <= 0:
            raise ValueError("r_max must be positive")
        self.M = int(M)
        self.r_max = float(r_max)
        self.centers = np.linspace(0.0, self.r_max, self.M)
        self.sigma = self.r_max / (self.M - 1) if self.M > 1 else self.r_max
        self.inv_s2 = 1.0 / (self.sigma * self.sigma)
        self.prefix = prefix
        if store is None:
            store = ParamStore({f"{prefix}.w": (self.M,), f"{prefix}.c": ()})
        self.store = store
        self.w = store.view(f"{prefix}.w")
        self.c = store.view(f"{prefix}.c")
        self._gw = store.grad_view(f"{prefix}.w")
        self._gc = store.grad_view(f"{prefix}.c")

    # -- evaluation -------------------------------------------------------

    def psi_eval(self, r: float) -> tuple[float, float]:
        """Value and distance-derivative at a single distance r >= 0."""
        r = float(r)
        if not np.isfinite(r) or r < 0.0:
            raise ValueError(f"distance must be finite and non-negative, got {r}")
        psi, dpsi, _, _, _ = self.tables(np.array(r))
        return float(psi), float(dpsi)

    def tables(self, r: np.ndarray):
        """Batched psi, psi', psi'' plus the basis matrices reused by gradients.

        Returns ``(psi, dpsi, d2psi, basis, slope)`` where for each basis
        function ``dpsi_m = slope_m * basis_m`` with
        ``slope_m = (mu_m - r) / sigma^2``.
        """
        r = np.asarray(r, dtype=np.float64)
        d = r[..., None] - self.centers
        basis = np.exp(-0.5 * self.inv_s2 * d * d)
        slope = -d * self.inv_s2
        psi = basis @ self.w + self.c
        dpsi = (slope * basis) @ self.w
        d2psi = ((slope * slope - self.inv_s2) * basis) @ self.w
        return psi, dpsi, d2psi, basis, slope

    # -- parameter gradients ------------------------------------------------

    def psi_param_grads(self, r: float, upstream_value: float, upstream_deriv: float) -> None:
        """Accumulate d(upstream_value*psi(r) + upstream_deriv*psi'(r))/dtheta into grads."""
        r = float(r)
        if not np.isfinite(r) or r < 0.0:
            raise ValueError(f"distance must be finite and non-negative, got {r}")
        _, _, _, basis, slope = self.tables(np.array(r))
        self.accumulate_param_grads(basis, slope, np.array(upstream_value), np.array(upstream_deriv))

    def accumulate_param_grads(self, basis, slope, upstream_value, upstream_deriv) -> None:
        """Batched form of ``psi_param_grads`` reusing precomputed basis tables.

        ``basis``/``slope`` have shape (..., M); the upstream coefficients
        broadcast over the leading axes and are summed out.
        """
        uv = np.asarray(upstream_value, dtype=np.float64)[..., None]
        ud = np.asarray(upstream_deriv, dtype=np.float64)[..., None]
        contrib = basis * (uv + ud * slope)
        self._gw += contrib.reshape(-1, self.M).sum(axis=0)
        self._gc += np.sum(upstream_value)

    def add_param_grads(self, gw: np.ndarray, gc: float) -> None:
        """Hot-path accumulation of precomputed weight/bias gradient terms."""
        self._gw += gw
        self._gc += gc

    def hyperparams(self) -> dict:
        return {"M": self.M, "r_max": self.r_max}
