"""Likelihood and energy-based training of the flow models.

Two losses share the flows' tape hooks:

* ``nll_loss`` — negative mean log-likelihood of a data batch.
* ``kl_loss`` — reverse Kullback-Leibler estimate ``mean(u(x) + log q(x))``
  over model samples, with gradients through the sampling path.  Energies
  above a threshold are linearly rescaled (clamp-with-slope) so early
  training sees bounded gradients, and samples with non-finite energy are
  excluded and counted.

``train_loop`` runs a likelihood-only phase followed by a mixed phase
optimizing ``(1-lambda)*NLL + lambda*KL`` with adaptive-moment updates and
gradient-norm clipping.  Given (seed, config, dataset) the whole run is
deterministic: data batching and model sampling use separate child
generators so that a zero KL weight reproduces pure likelihood training
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .energy import EnergyModel
from .errors import TrainingError
from .flowbase import FlowModel

__all__ = ["TrainConfig", "Adam", "Checkpoint", "nll_loss", "kl_loss", "train_loop", "clamp_energy"]

CREATED_BY = "flowbg-0.1.0"


@dataclass
class TrainConfig:
    batch_size: int = 256
    n_iters_ml: int = 2000
    n_iters_mixed: int = 2000
    learning_rate: float = 1e-3
    kl_weight: float = 0.5
    seed: int = 0
    grad_clip: float = 100.0

    def validate(self) -> "TrainConfig":
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.n_iters_ml < 0 or self.n_iters_mixed < 0:
            raise ValueError("iteration counts must be non-negative")
        if not 0.0 <= self.kl_weight <= 1.0:
            raise ValueError("kl_weight must lie in [0, 1]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        return self


@dataclass
class Checkpoint:
    model: str
    hyperparams: dict
    params: np.ndarray
    seed: int
    created_by: str = CREATED_BY
    loss_history: list = field(default_factory=list)


class Adam:
    """Adaptive-moment estimation on a flat parameter vector."""

    def __init__(self, n_params: int, learning_rate: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, values: np.ndarray, grads: np.ndarray) -> None:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grads * grads
        mhat = self.m / (1.0 - self.beta1**self.t)
        vhat = self.v / (1.0 - self.beta2**self.t)
        values -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def clip_grad_norm(grads: np.ndarray, max_norm: float) -> float:
    """Rescale grads in place to the given global norm; returns the pre-clip norm."""
    norm = float(np.linalg.norm(grads))
    if max_norm > 0 and norm > max_norm:
        grads *= max_norm / norm
    return norm


def nll_loss(flow: FlowModel, batch: np.ndarray, weight: float = 1.0):
    """Negative mean log-likelihood; accumulates weight * d(loss)/dtheta.

    Returns ``(loss, grads)`` where grads is the flow's accumulator.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    logp, tape = flow.logprob_with_tape(batch)
    loss = float(-np.mean(logp))
    if weight != 0.0:
        scales = np.full(batch.shape[0], -weight / batch.shape[0])
        flow.backward_logprob(tape, scales)
    return loss, flow.params.grads


def clamp_energy(u: np.ndarray, threshold: float = 1e3, slope: float = 1e-2):
    """Linear rescale above the threshold; returns (clamped value, derivative)."""
    u = np.asarray(u, dtype=np.float64)
    over = u > threshold
    val = np.where(over, threshold + slope * (u - threshold), u)
    dval = np.where(over, slope, 1.0)
    return val, dval


class KLResult(NamedTuple):
    loss: float
    grads: np.ndarray
    n_excluded: int


def kl_loss(flow: FlowModel, energy: EnergyModel, rng: np.random.Generator,
            batch_size: int, weight: float = 1.0,
            clamp_threshold: float = 1e3, clamp_slope: float = 1e-2) -> KLResult:
    """Reverse-KL estimate mean(u(x) + log q(x)) over model samples.

    Equals KL(q || p) up to the unknown log-partition constant.  Samples
    with non-finite energy are excluded from the mean (their count is
    reported); more than 50% excluded raises ``TrainingError``.
    """
    X, logq, tape = flow.sample_with_tape(rng, batch_size)
    u = energy.energy_many(X)
    ok = np.isfinite(u)
    n_ok = int(ok.sum())
    if n_ok < batch_size / 2.0:
        raise TrainingError(
            f"{batch_size - n_ok}/{batch_size} samples had non-finite energy"
        )
    u_eff, du = clamp_energy(u[ok], clamp_threshold, clamp_slope)
    loss = float(np.mean(u_eff + logq[ok]))
    if weight != 0.0:
        grad_u = energy.gradient_many(X[ok])
        adj_x = np.zeros_like(X)
        adj_logq = np.zeros(batch_size)
        adj_x[ok] = (weight / n_ok) * du[:, None, None] * grad_u
        adj_logq[ok] = weight / n_ok
        flow.backward_sample(tape, adj_x, adj_logq)
    return KLResult(loss, flow.params.grads, batch_size - n_ok)


def train_loop(flow: FlowModel, energy: EnergyModel | None, dataset: np.ndarray,
               cfg: TrainConfig, metrics_path=None,
               initial_history: list | None = None) -> Checkpoint:
    """Likelihood phase then mixed likelihood/energy phase; returns a checkpoint.

    A non-finite loss aborts the run and the checkpoint carries the last
    finite parameter state.  ``metrics_path`` optionally streams one CSV row
    per iteration: iter, nll, kl, total, grad_norm, excluded_count.
    """
    cfg.validate()
    dataset = np.asarray(dataset, dtype=np.float64)
    if dataset.shape[0] == 0:
        raise ValueError("dataset must be nonempty")
    if cfg.n_iters_mixed > 0 and cfg.kl_weight > 0.0 and energy is None:
        raise ValueError("mixed-phase training needs an energy model")

    seq = np.random.SeedSequence(cfg.seed)
    data_seed, model_seed = seq.spawn(2)
    rng_data = np.random.default_rng(data_seed)
    rng_model = np.random.default_rng(model_seed)

    adam = Adam(flow.params.size, learning_rate=cfg.learning_rate)
    history = list(initial_history) if initial_history else []
    last_good = flow.params.copy_values()
    lam = cfg.kl_weight

    metrics_file = open(metrics_path, "w") if metrics_path is not None else None
    if metrics_file is not None:
        metrics_file.write("iter,nll,kl,total,grad_norm,excluded_count\n")

    def record(it, nll, kl, total, gnorm, excluded):
        entry = {"iter": it, "nll": nll, "kl": kl, "total": total,
                 "grad_norm": gnorm, "excluded": excluded}
        history.append(entry)
        if metrics_file is not None:
            metrics_file.write(f"{it},{nll:.17g},{kl:.17g},{total:.17g},{gnorm:.17g},{excluded}\n")

    try:
        for it in range(cfg.n_iters_ml + cfg.n_iters_mixed):
            mixed = it >= cfg.n_iters_ml
            w_nll = (1.0 - lam) if mixed else 1.0
            w_kl = lam if mixed else 0.0
            flow.params.zero_grads()

            nll_val = 0.0
            if w_nll > 0.0:
                if cfg.batch_size < dataset.shape[0]:
                    idx = rng_data.integers(0, dataset.shape[0], size=cfg.batch_size)
                    batch = dataset[idx]
                else:
                    batch = dataset  # full-batch when the dataset fits
                nll_val, _ = nll_loss(flow, batch, weight=w_nll)
            kl_val, excluded = 0.0, 0
            if w_kl > 0.0:
                res = kl_loss(flow, energy, rng_model, cfg.batch_size, weight=w_kl)
                kl_val, excluded = res.loss, res.n_excluded

            total = w_nll * nll_val + w_kl * kl_val
            if not np.isfinite(total):
                record(it, nll_val, kl_val, total, float("nan"), excluded)
                flow.params.set_values(last_good)
                break
            gnorm = clip_grad_norm(flow.params.grads, cfg.grad_clip)
            adam.step(flow.params.values, flow.params.grads)
            last_good = flow.params.copy_values()
            record(it, nll_val, kl_val, total, gnorm, excluded)
    finally:
        if metrics_file is not None:
            metrics_file.close()

    return Checkpoint(
        model=flow.name,
        hyperparams={"model": flow.hyperparams(), "train": vars(cfg).copy()},
        params=flow.params.copy_values(),
        seed=cfg.seed,
        loss_history=history,
    )
