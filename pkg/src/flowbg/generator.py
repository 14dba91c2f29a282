"""Boltzmann-generator assembly: weighted sampling, reweighting, minimization.

Generated samples carry exact proposal log-densities, so expectations under
the Boltzmann density exp(-u)/Z follow from self-normalized importance
weights log w = -u - log q (defined up to one additive constant per batch;
the maximum is subtracted before exponentiation for stability).

``minimize_energy`` is a damped Newton iteration - a second-order method
with no momentum - using Levenberg-style adaptation of the damping so every
accepted step decreases the energy even where the Hessian is indefinite.
Steps are projected onto the mean-free subspace, which removes the
translation null space of particle energies.

Local minima are identified up to symmetry by their signature: the sorted
vector of pairwise distances, which is exactly invariant under relabeling
and invariant under rotation/translation to rounding.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .energy import EnergyModel
from .errors import NonConvergenceError
from .flowbase import FlowModel
from .geometry import pairwise_distances, remove_mean

__all__ = [
    "WeightedSample",
    "MinimumRecord",
    "generate",
    "effective_sample_size",
    "reweighted_expectation",
    "signature",
    "minimize_energy",
    "minimize_many",
    "distinct_minima",
]


@dataclass
class WeightedSample:
    x: np.ndarray
    logq: float
    u: float
    logw: float


def generate(flow: FlowModel, energy: EnergyModel, n: int,
             rng: np.random.Generator) -> list[WeightedSample]:
    """Draw n samples with log-density, energy, and unnormalized log-weight.

    Samples whose energy is non-finite are flagged with logw = -inf.
    """
    if n == 0:
        return []
    X, logq = flow.sample_many(rng, n)
    u = energy.energy_many(X)
    logw = np.where(np.isfinite(u), -u - logq, -np.inf)
    return [WeightedSample(X[i], float(logq[i]), float(u[i]), float(logw[i]))
            for i in range(n)]


def _logw_array(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        return np.asarray(samples, dtype=np.float64)
    return np.array([s.logw for s in samples])


def effective_sample_size(samples) -> float:
    """ESS = (sum w)^2 / sum w^2 from log-weights (list of samples or array)."""
    logw = _logw_array(samples)
    finite = np.isfinite(logw)
    if not np.any(finite):
        raise ValueError("all importance weights are zero (logw = -inf)")
    w = np.exp(logw - logw[finite].max())
    w[~finite] = 0.0
    return float(w.sum() ** 2 / np.sum(w * w))


def reweighted_expectation(samples: list[WeightedSample], observable) -> float:
    """Self-normalized importance estimate of E_p[observable]."""
    logw = _logw_array(samples)
    finite = np.isfinite(logw)
    if not np.any(finite):
        raise ValueError("all importance weights are zero (logw = -inf)")
    w = np.exp(logw - logw[finite].max())
    w[~finite] = 0.0
    f = np.array([observable(s.x) for s in samples])
    f[~finite] = 0.0
    return float(np.sum(w * f) / np.sum(w))


def signature(x: np.ndarray) -> np.ndarray:
    """Sorted pairwise distances: a symmetry-invariant shape identifier."""
    K = x.shape[0]
    iu, ju = np.triu_indices(K, k=1)
    return np.sort(pairwise_distances(x)[iu, ju])


@dataclass
class MinimumRecord:
    x_min: np.ndarray
    u_min: float
    signature: np.ndarray
    grad_norm: float
    iterations: int
    n_hits: int = 1


def minimize_energy(x0: np.ndarray, energy: EnergyModel, grad_tol: float = 1e-8,
                    max_iter: int = 500, max_step: float = 0.5) -> MinimumRecord:
    """Damped Newton descent to a local minimum of u.

    Iterates x <- x - (H + mu I)^{-1} grad u with the step projected onto
    the mean-free subspace; mu grows until the damped Hessian is positive
    definite, the step is shorter than ``max_step``, and the energy
    decreases, and relaxes after every success, so the energy is
    non-increasing throughout.  Definiteness and the step cap keep descent
    local: where the Hessian is indefinite a lightly damped Newton step
    otherwise hops into a different basin.  Raises ``NonConvergenceError``
    (carrying the last iterate) if the projected gradient norm does not
    reach ``grad_tol`` in ``max_iter`` iterations.
    """
    x = remove_mean(np.asarray(x0, dtype=np.float64))
    K, D = x.shape
    u = energy.energy(x)
    if not np.isfinite(u):
        raise ValueError("starting energy is not finite")
    eye = np.eye(K * D)
    mu = 1e-3
    for it in range(max_iter + 1):
        g = remove_mean(energy.gradient(x))
        gnorm = float(np.linalg.norm(g))
        if gnorm < grad_tol:
            return MinimumRecord(x, float(u), signature(x), gnorm, it)
        if it == max_iter:
            break
        H = energy.hessian(x)
        flat_g = g.reshape(-1)
        while True:
            step = None
            try:
                np.linalg.cholesky(H + mu * eye)  # demand a convex local model
                step = np.linalg.solve(H + mu * eye, -flat_g)
            except np.linalg.LinAlgError:
                pass
            if step is not None and np.linalg.norm(step) <= max_step:
                x_new = remove_mean(x + step.reshape(K, D))
                u_new = energy.energy(x_new)
                if np.isfinite(u_new) and u_new <= u:
                    x, u = x_new, u_new
                    mu = max(mu * 0.1, 1e-12)
                    break
            mu *= 10.0
            if mu > 1e16:
                raise NonConvergenceError(
                    "damping exhausted without an energy-decreasing step",
                    last_iterate=x, iterations=it)
    raise NonConvergenceError(
        f"gradient norm {gnorm:.3e} after {max_iter} iterations",
        last_iterate=x, iterations=max_iter)


def minimize_many(X: np.ndarray, energy: EnergyModel, grad_tol: float = 1e-8,
                  max_iter: int = 500, threads: int | None = None) -> list[MinimumRecord]:
    """Minimize a batch of starting points; order of results matches input."""
    def work(x):
        return minimize_energy(x, energy, grad_tol=grad_tol, max_iter=max_iter)

    if threads is None or threads <= 1:
        return [work(x) for x in X]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, X))


def distinct_minima(records: list[MinimumRecord], tol: float = 1e-3) -> list[MinimumRecord]:
    """Deduplicate converged minima by signature with per-entry tolerance.

    Records whose signatures agree within ``tol`` collapse to one
    representative (the lowest energy), whose ``n_hits`` counts the group.
    """
    reps: list[MinimumRecord] = []
    for rec in records:
        for i, rep in enumerate(reps):
            if rep.signature.shape == rec.signature.shape and \
                    np.max(np.abs(rep.signature - rec.signature)) <= tol:
                keep = rec if rec.u_min < rep.u_min else rep
                reps[i] = MinimumRecord(keep.x_min, keep.u_min, keep.signature,
                                        keep.grad_norm, keep.iterations,
                                        n_hits=rep.n_hits + 1)
                break
        else:
            reps.append(MinimumRecord(rec.x_min, rec.u_min, rec.signature,
                                      rec.grad_norm, rec.iterations, n_hits=1))
    return reps
