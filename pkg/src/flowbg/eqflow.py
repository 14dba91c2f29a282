"""Equivariant continuous normalizing flow for particle systems.

The dynamics move every particle along its difference vectors to all
others, scaled by a learned function of pair distance:

    g_i(x) = sum_{j != i} psi(||x_i - x_j||) * (x_i - x_j)

This field commutes with particle relabeling and rotation and is unchanged
by translation, and it conserves the center of mass exactly (the summand is
antisymmetric in i, j).  Its divergence is available in closed form,

    div g(x) = sum_{i != j} [ psi'(r_ij) * r_ij + D * psi(r_ij) ],

with the i = j terms excluded: the vector field's self-term vanishes
identically, and naively including psi(0) would add a spurious D*psi(0) per
particle that the true Jacobian trace does not contain.

State and log-density evolve together under fixed-step RK4 over [t0, t1].
The forward map integrates (dy/dt, dl/dt) = (g, +div); ``dlogdet`` is the
accumulated l, so a sample's density is ``logq = prior_logprob(z) -
dlogdet_forward``, and the reverse map integrates (-g, -div) so that
``logprob(x) = prior_logprob(z) + dlogdet_reverse``.  Fixed steps keep the
map deterministic and let gradients be taken exactly through the unrolled
integrator: each step's four stage states are recorded on a tape, and the
backward pass replays them in reverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, StaleTapeError
from .flowbase import FlowModel
from .geometry import as_configuration, require_mean_free
from .params import ParamStore
from .prior import MeanFreePrior
from .radialnet import RadialNet

__all__ = ["EquivariantFlow", "IntegrationTape", "radial_dynamics", "radial_divergence"]


def radial_dynamics(x: np.ndarray, net: RadialNet) -> np.ndarray:
    """Velocity field g(x) for a single (K, D) configuration."""
    x = as_configuration(x)
    helper = _PairKernel(*x.shape, net)
    g, _ = helper.rhs(x[None])
    return g[0]


def radial_divergence(x: np.ndarray, net: RadialNet) -> float:
    """Exact divergence (Jacobian trace) of the velocity field at x."""
    x = as_configuration(x)
    helper = _PairKernel(*x.shape, net)
    _, div = helper.rhs(x[None])
    return float(div[0])


class _PairKernel:
    """Batched dynamics/divergence evaluation and its vector-Jacobian products.

    Works on the upper-triangle pair list so the radial basis is evaluated
    once per unordered pair; pair quantities scatter back to particles
    through a signed incidence matrix.
    """

    def __init__(self, K: int, D: int, net: RadialNet):
        self.K, self.D = K, D
        self.net = net
        self.iu, self.ju = np.triu_indices(K, k=1)
        P = self.iu.size
        inc = np.zeros((K, P))
        inc[self.iu, np.arange(P)] = 1.0
        inc[self.ju, np.arange(P)] = -1.0
        self._inc = inc[None]  # (1, K, P) for broadcasting matmul

    def _pair_dists(self, Y):
        du = Y[:, self.iu, :] - Y[:, self.ju, :]
        r_u = np.sqrt(np.einsum("bpd,bpd->bp", du, du))
        return du, r_u

    def rhs(self, Y):
        """g (B, K, D) and div (B,) at the batch of states Y."""
        du, r_u = self._pair_dists(Y)
        net = self.net
        d = r_u[..., None] - net.centers
        e = np.multiply(d, d)
        e *= -0.5 * net.inv_s2
        np.exp(e, out=e)
        d *= e  # d becomes (r - mu) * basis
        psi_u = e @ net.w + net.c
        dpsi_u = (-net.inv_s2) * (d @ net.w)
        g = self._inc @ (psi_u[..., None] * du)
        div = 2.0 * ((dpsi_u * r_u).sum(axis=1) + self.D * psi_u.sum(axis=1))
        return g, div

    def vjp(self, Y, gbar, dbar, with_params: bool):
        """Adjoint of (gbar . g(Y) + dbar * div(Y)) with respect to Y.

        Also accumulates the parameter adjoint into the net's gradient
        buffer when ``with_params`` is set.
        """
        du, r_u = self._pair_dists(Y)
        net = self.net
        M = net.M
        d = r_u[..., None] - net.centers
        e = np.multiply(d, d)
        e *= -0.5 * net.inv_s2
        np.exp(e, out=e)
        de = d * e
        d *= de  # d becomes (r - mu)^2 * basis
        ew = e @ net.w
        psi_u = ew + net.c
        dpsi_u = (-net.inv_s2) * (de @ net.w)
        d2psi_u = (net.inv_s2 * net.inv_s2) * (d @ net.w) - net.inv_s2 * ew

        # upstream coefficients on psi(r_u) and psi'(r_u); the ordered double
        # sums collapse onto unordered pairs with a factor 2
        gdiff_u = gbar[:, self.iu, :] - gbar[:, self.ju, :]
        val_u = np.einsum("bpd,bpd->bp", gdiff_u, du)
        up_psi = val_u + (2.0 * self.D) * dbar[:, None]
        up_dpsi = (2.0 * r_u) * dbar[:, None]
        if with_params:
            # two GEMVs instead of materializing the (B, P, M) contribution
            gw = e.reshape(-1, M).T @ up_psi.reshape(-1)
            gw -= net.inv_s2 * (de.reshape(-1, M).T @ up_dpsi.reshape(-1))
            net.add_param_grads(gw, np.sum(up_psi))

        # chain to the pair distances, then to coordinates
        rbar_u = up_psi * dpsi_u + up_dpsi * d2psi_u + 2.0 * dbar[:, None] * dpsi_u
        w_u = np.where(r_u > 0.0, rbar_u / np.where(r_u > 0.0, r_u, 1.0), 0.0)
        # dynamics term with psi held fixed plus the distance chain term
        return self._inc @ (psi_u[..., None] * gdiff_u + w_u[..., None] * du)


@dataclass
class IntegrationTape:
    """Stage states of one unrolled RK4 integration, for exact backprop."""

    direction: str
    h_signed: float
    stages: np.ndarray  # (n_steps, 4, B, K, D)
    y_final: np.ndarray  # (B, K, D)
    dlogdet: np.ndarray  # (B,)
    fingerprint: bytes
    squeeze: bool


class EquivariantFlow(FlowModel):
    """Continuous flow with radial pairwise dynamics and a mean-free Gaussian prior."""

    name = "eqflow"

    def __init__(self, K: int, D: int, M: int = 32, r_max: float = 8.0,
                 n_steps: int = 32, t0: float = 0.0, t1: float = 1.0):
        if n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if not t1 > t0:
            raise ValueError("need t1 > t0")
        self.K, self.D = int(K), int(D)
        self.n_steps = int(n_steps)
        self.t0, self.t1 = float(t0), float(t1)
        self.net = RadialNet(M=M, r_max=r_max)
        self.prior = MeanFreePrior(self.K, self.D)
        self._kernel = _PairKernel(self.K, self.D, self.net)

    @property
    def params(self) -> ParamStore:
        return self.net.store

    def hyperparams(self) -> dict:
        return {"M": self.net.M, "r_max": self.net.r_max,
                "n_steps": self.n_steps, "t0": self.t0, "t1": self.t1}

    # -- integration --------------------------------------------------------

    def _as_batch(self, y0):
        y0 = np.asarray(y0, dtype=np.float64)
        squeeze = y0.ndim == 2
        Y = y0[None] if squeeze else y0
        if Y.ndim != 3 or Y.shape[-2:] != (self.K, self.D):
            raise ValueError(f"expected trailing shape ({self.K}, {self.D}), got {y0.shape}")
        return Y, squeeze

    def integrate(self, y0, direction: str, with_tape: bool = False):
        """Fixed-step RK4 transport of state and log-density change.

        ``direction`` is "forward" (prior to sample space) or "reverse".
        Returns ``(y1, dlogdet, tape)``; the tape is None unless requested.
        Raises ``DivergenceError`` naming the step at which the state left
        the finite range.
        """
        if direction not in ("forward", "reverse"):
            raise ValueError(f"direction must be 'forward' or 'reverse', got {direction!r}")
        Y, squeeze = self._as_batch(y0)
        require_mean_free(Y, tol=1e-8, what="integration start state")
        B = Y.shape[0]
        hs = (self.t1 - self.t0) / self.n_steps
        if direction == "reverse":
            hs = -hs
        ell = np.zeros(B)
        stages = np.empty((self.n_steps, 4, B, self.K, self.D)) if with_tape else None
        rhs = self._kernel.rhs
        Y = Y.copy()
        # the explicit finite check below reports blow-ups; numpy's overflow
        # warnings on the way there are redundant noise
        with np.errstate(over="ignore", invalid="ignore"):
            for step in range(self.n_steps):
                a1 = Y
                k1g, k1d = rhs(a1)
                a2 = Y + (0.5 * hs) * k1g
                k2g, k2d = rhs(a2)
                a3 = Y + (0.5 * hs) * k2g
                k3g, k3d = rhs(a3)
                a4 = Y + hs * k3g
                k4g, k4d = rhs(a4)
                Y = Y + (hs / 6.0) * (k1g + 2.0 * k2g + 2.0 * k3g + k4g)
                ell = ell + (hs / 6.0) * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
                if not np.all(np.isfinite(Y)):
                    raise DivergenceError(
                        f"non-finite state during {direction} integration at step {step}",
                        step_index=step,
                    )
                if with_tape:
                    stages[step, 0], stages[step, 1], stages[step, 2], stages[step, 3] = a1, a2, a3, a4
        tape = None
        if with_tape:
            tape = IntegrationTape(direction, hs, stages, Y, ell,
                                   self.params.fingerprint(), squeeze)
        if squeeze:
            return Y[0], float(ell[0]), tape
        return Y, ell, tape

    def forward(self, z):
        x, dlogdet, _ = self.integrate(z, "forward")
        return x, dlogdet

    def inverse(self, x):
        z, dlogdet, _ = self.integrate(x, "reverse")
        return z, dlogdet

    # -- densities and sampling ----------------------------------------------

    def logprob(self, x) -> float:
        z, dlogdet = self.inverse(as_configuration(x))
        return float(self.prior.logprob(z) + dlogdet)

    def logprob_many(self, X, chunk: int = 1024) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.empty(X.shape[0])
        for lo in range(0, X.shape[0], chunk):
            Z, dld, _ = self.integrate(X[lo : lo + chunk], "reverse")
            out[lo : lo + chunk] = self.prior.logprob(Z) + dld
        return out

    def sample(self, rng):
        x, logq = self.sample_many(rng, 1)
        return x[0], float(logq[0])

    def sample_many(self, rng, n: int):
        Z = self.prior.sample(rng, n)
        X, dld, _ = self.integrate(Z, "forward")
        return X, self.prior.logprob(Z) - dld

    # -- reverse-mode gradients ------------------------------------------------

    def param_grads(self, tape: IntegrationTape, adjoint_x, adjoint_logdet):
        """Accumulate d(adjoint_x . y1 + adjoint_logdet * dlogdet)/dtheta.

        The tape must come from an ``integrate`` call under the current
        parameter values; a mismatch raises ``StaleTapeError``.  Returns the
        adjoint with respect to the integration start state.
        """
        if tape.fingerprint != self.params.fingerprint():
            raise StaleTapeError("parameters changed since this tape was recorded")
        adjoint_x = np.asarray(adjoint_x, dtype=np.float64)
        if tape.squeeze and adjoint_x.ndim == 2:
            adjoint_x = adjoint_x[None]
        adj_y = adjoint_x.copy()
        adj_ell = np.atleast_1d(np.asarray(adjoint_logdet, dtype=np.float64)).copy()
        hs = tape.h_signed
        vjp = self._kernel.vjp
        for step in range(tape.stages.shape[0] - 1, -1, -1):
            a1, a2, a3, a4 = tape.stages[step]
            gbar4 = (hs / 6.0) * adj_y
            x4 = vjp(a4, gbar4, (hs / 6.0) * adj_ell, True)
            gbar3 = (hs / 3.0) * adj_y + hs * x4
            x3 = vjp(a3, gbar3, (hs / 3.0) * adj_ell, True)
            gbar2 = (hs / 3.0) * adj_y + (0.5 * hs) * x3
            x2 = vjp(a2, gbar2, (hs / 3.0) * adj_ell, True)
            gbar1 = (hs / 6.0) * adj_y + (0.5 * hs) * x2
            x1 = vjp(a1, gbar1, (hs / 6.0) * adj_ell, True)
            adj_y = adj_y + x1 + x2 + x3 + x4
        return adj_y[0] if tape.squeeze else adj_y

    # -- training hooks ---------------------------------------------------------

    def logprob_with_tape(self, X):
        X = np.asarray(X, dtype=np.float64)
        Z, dld, tape = self.integrate(X, "reverse", with_tape=True)
        return self.prior.logprob(Z) + dld, tape

    def backward_logprob(self, tape: IntegrationTape, scales) -> None:
        scales = np.asarray(scales, dtype=np.float64)
        adj_z = scales[:, None, None] * self.prior.grad_logprob(tape.y_final)
        self.param_grads(tape, adj_z, scales)

    def sample_with_tape(self, rng, n: int):
        Z = self.prior.sample(rng, n)
        X, dld, tape = self.integrate(Z, "forward", with_tape=True)
        return X, self.prior.logprob(Z) - dld, tape

    def backward_sample(self, tape: IntegrationTape, adjoint_x, adjoint_logq) -> None:
        # logq = prior_logprob(z) - dlogdet_forward and z does not depend on
        # the parameters, so only -dlogdet carries gradient
        self.param_grads(tape, adjoint_x, -np.asarray(adjoint_logq, dtype=np.float64))
