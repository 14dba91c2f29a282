"""Metropolis-Hastings sampling of Boltzmann densities exp(-u(x)).

Proposals are isotropic Gaussian moves of every coordinate.  Chains are
deliberately allowed to stay short and unconverged - the training-data
regime of interest - so burn-in defaults to zero.  Retained configurations
are mean-removed on write, which fixes the preprocessing both flow models
see at the file boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .energy import EnergyModel
from .geometry import remove_mean

__all__ = ["McmcConfig", "ChainResult", "mh_step", "run_chain", "perturb_minimum"]


@dataclass
class McmcConfig:
    n_samples: int = 10000
    burn_in: int = 0
    thinning: int = 1
    proposal_scale: float = 0.1
    seed: int = 0
    init: np.ndarray | None = None

    def validate(self) -> "McmcConfig":
        if self.proposal_scale <= 0:
            raise ValueError("proposal_scale must be positive")
        if self.n_samples < 0 or self.burn_in < 0:
            raise ValueError("counts must be non-negative")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        return self


@dataclass
class ChainResult:
    samples: np.ndarray          # (n_samples, K, D), mean-removed
    energies: np.ndarray         # energy of each retained sample
    n_proposals: int
    n_accepted: int
    seed: int

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_proposals if self.n_proposals else 0.0

    def metadata(self) -> dict:
        e = self.energies
        summary = {}
        if e.size:
            summary = {"first": float(e[0]), "last": float(e[-1]),
                       "min": float(e.min()), "max": float(e.max()),
                       "mean": float(e.mean())}
        return {"seed": self.seed, "n_samples": int(self.samples.shape[0]),
                "n_proposals": self.n_proposals, "n_accepted": self.n_accepted,
                "acceptance_rate": self.acceptance_rate,
                "energy_summary": summary}


def mh_step(x: np.ndarray, energy: EnergyModel, proposal_scale: float,
            rng: np.random.Generator):
    """One Metropolis-Hastings update; returns (next state, accepted flag).

    A proposal with non-finite energy is always rejected.
    """
    u_x = energy.energy(x)
    y = x + proposal_scale * rng.standard_normal(x.shape)
    u_y = energy.energy(y)
    if _accept(u_x, u_y, rng):
        return y, True
    return x, False


def _accept(u_x: float, u_y: float, rng: np.random.Generator) -> bool:
    if not math.isfinite(u_y):
        return False
    log_alpha = u_x - u_y
    if log_alpha >= 0.0:
        return True
    return rng.uniform() < math.exp(log_alpha)


def run_chain(cfg: McmcConfig, energy: EnergyModel) -> ChainResult:
    """Run a chain and retain every thinning-th state after burn-in, in order."""
    cfg.validate()
    if cfg.init is None:
        raise ValueError("chain needs an initial configuration")
    rng = np.random.default_rng(cfg.seed)
    x = np.asarray(cfg.init, dtype=np.float64).copy()
    u_x = energy.energy(x)
    if not math.isfinite(u_x):
        raise ValueError("initial configuration has non-finite energy")

    K, D = x.shape
    kept = np.empty((cfg.n_samples, K, D))
    kept_u = np.empty(cfg.n_samples)
    total_steps = cfg.burn_in + cfg.n_samples * cfg.thinning
    n_accepted = 0
    n_kept = 0
    for step in range(total_steps):
        y = x + cfg.proposal_scale * rng.standard_normal(x.shape)
        u_y = energy.energy(y)
        if _accept(u_x, u_y, rng):
            x, u_x = y, u_y
            n_accepted += 1
        if step >= cfg.burn_in and (step - cfg.burn_in) % cfg.thinning == cfg.thinning - 1:
            kept[n_kept] = x
            kept_u[n_kept] = u_x
            n_kept += 1
    samples = remove_mean(kept) if cfg.n_samples else kept
    return ChainResult(samples, kept_u, total_steps, n_accepted, cfg.seed)


def perturb_minimum(x_min: np.ndarray, noise_scale: float, n_samples: int,
                    rng: np.random.Generator, energy: EnergyModel) -> np.ndarray:
    """Dataset of Gaussian perturbations of a local minimum, mean-removed.

    The starting point must actually be a minimum (gradient norm < 1e-4);
    the energy model is required to enforce that precondition.
    """
    x_min = np.asarray(x_min, dtype=np.float64)
    gnorm = float(np.linalg.norm(energy.gradient(x_min)))
    if gnorm >= 1e-4:
        raise ValueError(f"x_min is not a local minimum: |grad u| = {gnorm:.3e} >= 1e-4")
    noise = noise_scale * rng.standard_normal((n_samples, *x_min.shape))
    return remove_mean(x_min[None] + noise)
