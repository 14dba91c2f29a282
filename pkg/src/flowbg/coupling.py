"""Affine coupling flow on flattened coordinates (the non-equivariant baseline).

A stack of coupling layers acts on the flat K*D coordinate vector.  Each
layer passes one half of the coordinates through unchanged (alternating
even/odd index masks) and transforms the other half affinely,

    x_active = v_active * exp(s(v_masked)) + t(v_masked),

where s and t are separate two-hidden-layer tanh perceptrons of the masked
part.  The scale output is bounded by a scaled-tanh clamp so exp stays
well-conditioned for any parameter values, keeping every layer bijective.
The log-determinant is the sum of the active scale outputs, exact by the
triangular Jacobian structure.  The prior is a full-rank standard normal on
all K*D coordinates: this model deliberately encodes no symmetry.

Output layers initialize to zero, so a fresh flow is the identity map;
hidden layers get small random weights from a seeded generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, StaleTapeError
from .flowbase import FlowModel
from .params import ParamStore

__all__ = ["CouplingFlow", "CouplingTape"]


class _MLP:
    """Two-hidden-layer tanh perceptron with hand-rolled reverse mode."""

    def __init__(self, store: ParamStore, prefix: str, n_in: int, hidden: int, n_out: int):
        self.names = [f"{prefix}.{p}" for p in ("W1", "b1", "W2", "b2", "W3", "b3")]
        self.W1, self.b1, self.W2, self.b2, self.W3, self.b3 = (store.view(n) for n in self.names)
        self.gW1, self.gb1, self.gW2, self.gb2, self.gW3, self.gb3 = (store.grad_view(n) for n in self.names)

    @staticmethod
    def shapes(prefix: str, n_in: int, hidden: int, n_out: int) -> dict[str, tuple]:
        return {
            f"{prefix}.W1": (hidden, n_in),
            f"{prefix}.b1": (hidden,),
            f"{prefix}.W2": (hidden, hidden),
            f"{prefix}.b2": (hidden,),
            f"{prefix}.W3": (n_out, hidden),
            f"{prefix}.b3": (n_out,),
        }

    def init_hidden(self, rng: np.random.Generator) -> None:
        # zero output layer keeps the whole flow at identity initially
        self.W1[:] = rng.standard_normal(self.W1.shape) / np.sqrt(self.W1.shape[1])
        self.W2[:] = rng.standard_normal(self.W2.shape) / np.sqrt(self.W2.shape[1])

    def forward(self, m: np.ndarray):
        a1 = np.tanh(m @ self.W1.T + self.b1)
        a2 = np.tanh(a1 @ self.W2.T + self.b2)
        out = a2 @ self.W3.T + self.b3
        return out, (m, a1, a2)

    def vjp(self, cache, obar: np.ndarray) -> np.ndarray:
        m, a1, a2 = cache
        self.gW3 += obar.T @ a2
        self.gb3 += obar.sum(axis=0)
        g2 = (obar @ self.W3) * (1.0 - a2 * a2)
        self.gW2 += g2.T @ a1
        self.gb2 += g2.sum(axis=0)
        g1 = (g2 @ self.W2) * (1.0 - a1 * a1)
        self.gW1 += g1.T @ m
        self.gb1 += g1.sum(axis=0)
        return g1 @ self.W1


@dataclass
class CouplingTape:
    kind: str  # "forward" or "inverse"
    layers: list = field(default_factory=list)
    final: np.ndarray | None = None
    dlogdet: np.ndarray | None = None
    fingerprint: bytes = b""
    squeeze: bool = False


class CouplingFlow(FlowModel):
    name = "realnvp"

    def __init__(self, K: int, D: int, n_layers: int = 8, hidden: int = 64,
                 clamp: float = 5.0, init_seed: int = 0):
        self.K, self.D = int(K), int(D)
        self.n_dims = self.K * self.D
        self.n_layers = int(n_layers)
        self.hidden = int(hidden)
        self.clamp = float(clamp)
        shapes: dict[str, tuple] = {}
        for l in range(self.n_layers):
            shapes.update(_MLP.shapes(f"layer{l}.scale", self.n_dims, self.hidden, self.n_dims))
            shapes.update(_MLP.shapes(f"layer{l}.shift", self.n_dims, self.hidden, self.n_dims))
        self.params = ParamStore(shapes)
        self.scale_nets = [_MLP(self.params, f"layer{l}.scale", self.n_dims, self.hidden, self.n_dims)
                           for l in range(self.n_layers)]
        self.shift_nets = [_MLP(self.params, f"layer{l}.shift", self.n_dims, self.hidden, self.n_dims)
                           for l in range(self.n_layers)]
        rng = np.random.default_rng(init_seed)
        for s_net, t_net in zip(self.scale_nets, self.shift_nets):
            s_net.init_hidden(rng)
            t_net.init_hidden(rng)
        idx = np.arange(self.n_dims)
        # mask 1 = passthrough; alternate which parity passes per layer
        self.masks = [((idx + l) % 2 == 0).astype(np.float64) for l in range(self.n_layers)]
        self._log_norm = -0.5 * self.n_dims * np.log(2.0 * np.pi)

    def hyperparams(self) -> dict:
        return {"L": self.n_layers, "hidden": self.hidden, "clamp": self.clamp}

    # -- layer pieces ----------------------------------------------------------

    def _scale_shift(self, l: int, masked: np.ndarray):
        s_raw, s_cache = self.scale_nets[l].forward(masked)
        t_raw, t_cache = self.shift_nets[l].forward(masked)
        active = 1.0 - self.masks[l]
        s = active * (self.clamp * np.tanh(s_raw / self.clamp))
        t = active * t_raw
        return s, t, s_cache, t_cache

    def _scale_shift_vjp(self, l: int, s, sbar, tbar, s_cache, t_cache) -> np.ndarray:
        active = 1.0 - self.masks[l]
        sbar_raw = sbar * active * (1.0 - (s / self.clamp) ** 2)
        tbar_raw = tbar * active
        mbar = self.scale_nets[l].vjp(s_cache, sbar_raw)
        mbar += self.shift_nets[l].vjp(t_cache, tbar_raw)
        return mbar

    # -- bijection ------------------------------------------------------------

    def _as_flat(self, v):
        v = np.asarray(v, dtype=np.float64)
        squeeze = v.ndim == 1
        if v.ndim == 2 and v.shape == (self.K, self.D) and self.D != self.n_dims:
            # a single (K, D) configuration rather than a batch of flat vectors
            v = v.reshape(self.n_dims)
            squeeze = True
        V = v[None] if squeeze else v
        if V.ndim == 3 and V.shape[1:] == (self.K, self.D):
            V = V.reshape(V.shape[0], self.n_dims)
        if V.ndim != 2 or V.shape[1] != self.n_dims:
            raise ValueError(f"expected vectors of length {self.n_dims}, got shape {v.shape}")
        return V, squeeze

    def forward(self, z, with_tape: bool = False):
        """Prior space to sample space; returns (x, dlogdet[, tape])."""
        V, squeeze = self._as_flat(z)
        tape = CouplingTape("forward", squeeze=squeeze)
        per_layer = np.zeros((self.n_layers, V.shape[0]))
        for l in range(self.n_layers):
            masked = V * self.masks[l]
            s, t, s_cache, t_cache = self._scale_shift(l, masked)
            V_out = V * np.exp(s) + t
            if not np.all(np.isfinite(V_out)):
                raise DivergenceError(f"non-finite state in coupling layer {l}", step_index=l)
            per_layer[l] = s.sum(axis=1)
            if with_tape:
                tape.layers.append((V, s, t, s_cache, t_cache))
            V = V_out
        dlogdet = per_layer.sum(axis=0)
        if with_tape:
            tape.final = V
            tape.dlogdet = dlogdet
            tape.fingerprint = self.params.fingerprint()
            return (V[0], float(dlogdet[0]), tape) if squeeze else (V, dlogdet, tape)
        return (V[0], float(dlogdet[0])) if squeeze else (V, dlogdet)

    def inverse(self, x, with_tape: bool = False):
        """Exact algebraic inverse, layers unwound in reverse order."""
        V, squeeze = self._as_flat(x)
        tape = CouplingTape("inverse", squeeze=squeeze)
        per_layer = np.zeros((self.n_layers, V.shape[0]))
        caches: list = [None] * self.n_layers
        for l in range(self.n_layers - 1, -1, -1):
            masked = V * self.masks[l]
            s, t, s_cache, t_cache = self._scale_shift(l, masked)
            V_out = (V - t) * np.exp(-s)
            per_layer[l] = -s.sum(axis=1)
            if with_tape:
                caches[l] = (V, V_out, s, t, s_cache, t_cache)
            V = V_out
        dlogdet = per_layer.sum(axis=0)
        if with_tape:
            tape.layers = caches
            tape.final = V
            tape.dlogdet = dlogdet
            tape.fingerprint = self.params.fingerprint()
            return (V[0], float(dlogdet[0]), tape) if squeeze else (V, dlogdet, tape)
        return (V[0], float(dlogdet[0])) if squeeze else (V, dlogdet)

    # -- densities and sampling --------------------------------------------------

    def _normal_logprob(self, Z: np.ndarray) -> np.ndarray:
        return -0.5 * np.einsum("bn,bn->b", Z, Z) + self._log_norm

    def logprob(self, x) -> float:
        V, _ = self._as_flat(x)
        Z, dld = self.inverse(V)
        return float(self._normal_logprob(Z)[0] + dld[0])

    def logprob_many(self, X) -> np.ndarray:
        V, _ = self._as_flat(X)
        Z, dld = self.inverse(V)
        return self._normal_logprob(Z) + dld

    def sample(self, rng):
        X, logq = self.sample_many(rng, 1)
        return X[0], float(logq[0])

    def sample_many(self, rng, n: int):
        Z = rng.standard_normal((n, self.n_dims))
        X, dld = self.forward(Z)
        logq = self._normal_logprob(Z) - dld
        return X.reshape(n, self.K, self.D), logq

    # -- reverse mode ----------------------------------------------------------

    def _check_tape(self, tape: CouplingTape, kind: str) -> None:
        if tape.fingerprint != self.params.fingerprint():
            raise StaleTapeError("parameters changed since this tape was recorded")
        if tape.kind != kind:
            raise StaleTapeError(f"expected a {kind} tape, got {tape.kind}")

    def backward_forward_pass(self, tape: CouplingTape, adjoint_x, adjoint_dlogdet):
        """Adjoint of (adjoint_x . x + adjoint_dlogdet * dlogdet) through forward()."""
        self._check_tape(tape, "forward")
        vbar = np.asarray(adjoint_x, dtype=np.float64).reshape(tape.final.shape).copy()
        lbar = np.asarray(adjoint_dlogdet, dtype=np.float64)[:, None]
        for l in range(self.n_layers - 1, -1, -1):
            V_in, s, t, s_cache, t_cache = tape.layers[l]
            exp_s = np.exp(s)
            sbar = vbar * V_in * exp_s + lbar
            tbar = vbar
            vnext = vbar * exp_s
            mbar = self._scale_shift_vjp(l, s, sbar, tbar, s_cache, t_cache)
            vbar = vnext + mbar * self.masks[l]
        return vbar

    def backward_inverse_pass(self, tape: CouplingTape, adjoint_z, adjoint_dlogdet):
        """Adjoint of (adjoint_z . z + adjoint_dlogdet * dlogdet) through inverse()."""
        self._check_tape(tape, "inverse")
        zbar = np.asarray(adjoint_z, dtype=np.float64).reshape(tape.final.shape).copy()
        lbar = np.asarray(adjoint_dlogdet, dtype=np.float64)[:, None]
        for l in range(self.n_layers):
            V_in, Z_out, s, t, s_cache, t_cache = tape.layers[l]
            exp_ms = np.exp(-s)
            sbar = -zbar * Z_out - lbar
            tbar = -zbar * exp_ms
            vnext = zbar * exp_ms
            mbar = self._scale_shift_vjp(l, s, sbar, tbar, s_cache, t_cache)
            zbar = vnext + mbar * self.masks[l]
        return zbar

    # -- training hooks -----------------------------------------------------------

    def logprob_with_tape(self, X):
        V, _ = self._as_flat(X)
        Z, dld, tape = self.inverse(V, with_tape=True)
        return self._normal_logprob(Z) + dld, tape

    def backward_logprob(self, tape: CouplingTape, scales) -> None:
        scales = np.asarray(scales, dtype=np.float64)
        adj_z = -tape.final * scales[:, None]
        self.backward_inverse_pass(tape, adj_z, scales)

    def sample_with_tape(self, rng, n: int):
        Z = rng.standard_normal((n, self.n_dims))
        X, dld, tape = self.forward(Z, with_tape=True)
        return X.reshape(n, self.K, self.D), self._normal_logprob(Z) - dld, tape

    def backward_sample(self, tape: CouplingTape, adjoint_x, adjoint_logq) -> None:
        # logq = N(z) - dlogdet_forward with a parameter-free z draw
        adj_x = np.asarray(adjoint_x, dtype=np.float64).reshape(tape.final.shape)
        self.backward_forward_pass(tape, adj_x, -np.asarray(adjoint_logq, dtype=np.float64))
