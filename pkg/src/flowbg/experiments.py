"""The two generalization experiments, as library functions.

Experiment 1 (unseen trajectory halves): a short out-of-equilibrium
Metropolis chain is split temporally 50/50; both flow models are trained on
the first half (likelihood phase, then mixed likelihood/energy phase) and
evaluated on both halves.  The symmetric model reaches similar negative
log-likelihoods on train and test while the coupling baseline collapses on
the unseen half.

Experiment 2 (unseen metastable states): the training set is a tiny
Gaussian cloud around one energy minimum.  After the same training recipe,
samples from each model are locally minimized with the damped Newton
optimizer and deduplicated by pair-distance signature.  The symmetric model
produces minima absent from the training set; the baseline reproduces only
the training basin.

Both experiments are deterministic functions of their run configuration and
write all artifacts (datasets, checkpoints, metrics, histogram CSVs)
through the shared file formats when an output directory is given.

Default configurations differ from the bare class defaults where desk-scale
measurements required it: chains are short (4000 steps at proposal scale
0.05) so the second half genuinely contains novel states, training budgets
fit a laptop-minutes envelope, and experiment 1 uses a small energy-loss
weight because a large one drags the radial flow away from both data
halves.
"""

from __future__ import annotations

import copy
import math
from pathlib import Path

import numpy as np

from . import dataio
from .config import DEFAULT_CONFIG, RunConfig, validate_config
from .coupling import CouplingFlow
from .energy import EnergyModel
from .eqflow import EquivariantFlow
from .flowbase import FlowModel
from .generator import distinct_minima, generate, minimize_energy, signature
from .geometry import apply_group, random_group_element, remove_mean
from .mcmc import McmcConfig, perturb_minimum, run_chain
from .training import TrainConfig, train_loop

__all__ = [
    "default_experiment_config",
    "chain_start_configuration",
    "reference_minimum",
    "experiment1",
    "experiment2",
    "train_model",
    "mean_nll",
    "invariance_probe",
]

# starting configuration whose local minimization defines experiment 2's
# training minimum (K=4, D=2); chosen once and fixed for reproducibility
_EXP2_START = np.array([
    [-1.5779, 0.4392], [3.6444, -1.0145], [-0.3255, 2.8300], [-1.7410, -2.2548],
])

_EXPERIMENT_OVERRIDES = {
    "experiment1": {
        "model": {"type": "eqflow", "hyperparams": {"M": 32, "r_max": 8.0, "n_steps": 16}},
        "train": {"batch_size": 256, "n_iters_ml": 800, "n_iters_mixed": 400,
                  "learning_rate": 1e-3, "kl_weight": 0.2, "grad_clip": 100.0},
        "mcmc": {"n_samples": 4000, "burn_in": 0, "thinning": 1, "proposal_scale": 0.05},
        "experiment": {"name": "experiment1", "split_fraction": 0.5,
                       "noise_scale": 0.05, "n_generate": 500},
    },
    "experiment2": {
        "model": {"type": "eqflow", "hyperparams": {"M": 32, "r_max": 8.0, "n_steps": 16}},
        "train": {"batch_size": 256, "n_iters_ml": 800, "n_iters_mixed": 400,
                  "learning_rate": 1e-3, "kl_weight": 0.5, "grad_clip": 100.0},
        "mcmc": {"n_samples": 4000, "burn_in": 0, "thinning": 1, "proposal_scale": 0.05},
        "experiment": {"name": "experiment2", "split_fraction": 0.5,
                       "noise_scale": 0.05, "n_generate": 500},
    },
}


def default_experiment_config(name: str, seed: int = 0) -> RunConfig:
    """The shipped default run configuration for one of the two experiments."""
    if name not in _EXPERIMENT_OVERRIDES:
        raise ValueError(f"unknown experiment {name!r}")
    doc = copy.deepcopy(DEFAULT_CONFIG)
    for section, content in _EXPERIMENT_OVERRIDES[name].items():
        doc[section] = copy.deepcopy(content)
    doc["seed"] = seed
    return validate_config(doc)


def chain_start_configuration(params, K: int, D: int) -> np.ndarray:
    """Symmetric stationary state used to start the trajectory experiment.

    For the 4-particle planar system this is the relaxed square: side length
    chosen so the energy is stationary under uniform scaling (a 1D
    bisection).  The square is an unstable stationary state, so a chain
    started in its neighborhood relaxes through genuinely new configurations
    over its whole length - the short out-of-equilibrium regime the
    trajectory-split experiment needs.  Other system sizes fall back to a
    regular ring of comparable scale.
    """
    if K == 4 and D == 2:
        def scale_derivative(side):
            s1, s2 = side - params.d0, math.sqrt(2.0) * side - params.d0
            fp = lambda s: 2.0 * params.a * s + 4.0 * params.b * s**3
            return 4.0 * fp(s1) + 2.0 * math.sqrt(2.0) * fp(s2)

        lo, hi = 0.1 * params.d0, params.d0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if scale_derivative(lo) * scale_derivative(mid) <= 0.0:
                hi = mid
            else:
                lo = mid
        half = 0.5 * 0.5 * (lo + hi)
        return np.array([[half, half], [half, -half], [-half, half], [-half, -half]])
    angles = np.linspace(0.0, 2.0 * math.pi, K, endpoint=False)
    start = np.zeros((K, D))
    start[:, 0] = 0.4 * params.d0 * np.cos(angles)
    start[:, 1] = 0.4 * params.d0 * np.sin(angles)
    return start


def reference_minimum(energy: EnergyModel, K: int, D: int):
    """Deterministic local minimum used as experiment 2's training-set center."""
    if K == 4 and D == 2:
        start = _EXP2_START
    else:
        angles = np.linspace(0.0, 2.0 * math.pi, K, endpoint=False)
        start = np.zeros((K, D))
        start[:, 0] = 1.6 * np.cos(angles)
        start[:, 1] = 1.6 * np.sin(angles)
    return minimize_energy(start, energy, max_iter=300)


def _build_model(cfg: RunConfig, model_type: str, init_seed: int) -> FlowModel:
    if model_type == cfg.model_type:
        hp = dict(cfg.model_hyperparams)
    else:
        hp = {}
    if model_type == "realnvp":
        hp.setdefault("init_seed", init_seed)
    return dataio.build_flow(model_type, cfg.K, cfg.D, hp)


def train_model(flow: FlowModel, energy: EnergyModel, dataset: np.ndarray,
                train_cfg: TrainConfig, metrics_path=None, initial_history=None):
    """Thin wrapper kept for symmetric naming with the CLI."""
    return train_loop(flow, energy, dataset, train_cfg, metrics_path=metrics_path,
                      initial_history=initial_history)


def mean_nll(flow: FlowModel, X: np.ndarray) -> float:
    return float(-np.mean(flow.logprob_many(X)))


def invariance_probe(flow: FlowModel, X: np.ndarray, n_probes: int,
                     rng: np.random.Generator) -> dict:
    """Max |logprob(g x) - logprob(x)| over random group elements per variant."""
    out = {}
    K, D = X.shape[-2:]
    base = flow.logprob_many(X)
    for kind in ("permutation", "rotation", "translation"):
        worst = 0.0
        for _ in range(n_probes):
            g = random_group_element(kind, K, D, rng)
            idx = int(rng.integers(0, X.shape[0]))
            x = apply_group(g, X[idx])
            if kind == "translation" and isinstance(flow, EquivariantFlow):
                # the continuous flow's density lives on the mean-free
                # subspace; translation invariance is projection-invariance
                x = remove_mean(x)
            worst = max(worst, abs(float(flow.logprob_many(x[None])[0]) - float(base[idx])))
        out[kind] = worst
    return out


def _seed_streams(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _chain_config(cfg: RunConfig, init: np.ndarray) -> McmcConfig:
    return McmcConfig(n_samples=cfg.mcmc.n_samples, burn_in=cfg.mcmc.burn_in,
                      thinning=cfg.mcmc.thinning, proposal_scale=cfg.mcmc.proposal_scale,
                      seed=cfg.seed, init=init)


def _train_cfg(cfg: RunConfig, seed: int) -> TrainConfig:
    t = copy.copy(cfg.train)
    t.seed = seed
    return t


def experiment1(cfg: RunConfig, out_dir=None) -> dict:
    """Train both models on the first half of a short chain; evaluate on both halves."""
    energy = cfg.energy()
    rng_init, _ = _seed_streams(cfg.seed, 2)

    if cfg.mcmc.init is not None:
        init = np.asarray(cfg.mcmc.init, dtype=np.float64)
    else:
        start = chain_start_configuration(cfg.energy_params, cfg.K, cfg.D)
        init = remove_mean(start + cfg.experiment["noise_scale"]
                           * rng_init.standard_normal((cfg.K, cfg.D)))
    chain = run_chain(_chain_config(cfg, init), energy)
    data = chain.samples
    n_train = int(round(cfg.experiment["split_fraction"] * data.shape[0]))
    train_half, test_half = data[:n_train], data[n_train:]

    metrics: dict = {"seed": cfg.seed, "n_train": int(train_half.shape[0]),
                     "n_test": int(test_half.shape[0]),
                     "chain_acceptance_rate": chain.acceptance_rate}
    checkpoints = {}
    sample_sets = {}
    for label, model_type, off in (("eqbg", "eqflow", 1), ("nbg", "realnvp", 2)):
        flow = _build_model(cfg, model_type, init_seed=cfg.seed * 10 + off)
        ckpt = train_loop(flow, energy, train_half, _train_cfg(cfg, cfg.seed * 10 + off))
        nll_train = mean_nll(flow, train_half)
        nll_test = mean_nll(flow, test_half)
        metrics[label] = {"nll_train": nll_train, "nll_test": nll_test,
                          "nll_gap": nll_test - nll_train}
        checkpoints[label] = ckpt
        sample_sets[label] = generate(flow, energy, cfg.experiment["n_generate"],
                                      np.random.default_rng(cfg.seed * 10 + off + 5))

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        dataio.write_dataset(out / "exp1_dataset.csv", data)
        dataio.write_json(out / "exp1_chain_meta.json", chain.metadata())
        for label in ("eqbg", "nbg"):
            dataio.write_checkpoint(out / f"exp1_checkpoint_{label}.json", checkpoints[label])
            dataio.write_samples(out / f"exp1_samples_{label}.csv", sample_sets[label])
            u = np.array([s.u for s in sample_sets[label]])
            dataio.write_histogram(out / f"exp1_energy_hist_{label}.csv", u)
            x1 = np.stack([s.x[0] for s in sample_sets[label]])
            dataio.write_dataset(out / f"exp1_x1_marginal_{label}.csv", x1[:, None, :])
        dataio.write_json(out / "exp1_metrics.json", metrics)
    return metrics


def experiment2(cfg: RunConfig, out_dir=None) -> dict:
    """Train both models on perturbations of one minimum; minimize their samples."""
    energy = cfg.energy()
    rng_data, _ = _seed_streams(cfg.seed, 2)

    ref = reference_minimum(energy, cfg.K, cfg.D)
    data = perturb_minimum(ref.x_min, cfg.experiment["noise_scale"],
                           cfg.mcmc.n_samples, rng_data, energy)
    sig_train = signature(ref.x_min)

    report: dict = {
        "seed": cfg.seed,
        "training_minimum": {
            "coords": [[float(v) for v in row] for row in ref.x_min],
            "u_min": float(ref.u_min),
            "signature": [float(v) for v in sig_train],
        },
    }
    checkpoints = {}
    minima_records = {}
    for label, model_type, off in (("eqbg", "eqflow", 1), ("nbg", "realnvp", 2)):
        flow = _build_model(cfg, model_type, init_seed=cfg.seed * 10 + off)
        ckpt = train_loop(flow, energy, data, _train_cfg(cfg, cfg.seed * 10 + off))
        samples = generate(flow, energy, cfg.experiment["n_generate"],
                           np.random.default_rng(cfg.seed * 10 + off + 5))
        records = []
        n_failed = 0
        for s in samples:
            try:
                records.append(minimize_energy(s.x, energy, max_iter=300))
            except Exception:
                n_failed += 1
        reps = distinct_minima(records, tol=1e-3)
        reps.sort(key=lambda r: r.u_min)
        new = [r for r in reps
               if not (r.signature.shape == sig_train.shape
                       and np.max(np.abs(r.signature - sig_train)) <= 1e-3)]
        report[label] = {
            "n_distinct": len(reps),
            "n_new": len(new),
            "n_minimization_failures": n_failed,
            "minima": [{
                "coords": [[float(v) for v in row] for row in r.x_min],
                "u_min": float(r.u_min),
                "signature": [float(v) for v in r.signature],
                "n_hits": int(r.n_hits),
            } for r in reps],
        }
        checkpoints[label] = ckpt
        minima_records[label] = reps

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        dataio.write_dataset(out / "exp2_dataset.csv", data)
        for label in ("eqbg", "nbg"):
            dataio.write_checkpoint(out / f"exp2_checkpoint_{label}.json", checkpoints[label])
            dataio.write_minima(out / f"exp2_minima_{label}.json", minima_records[label])
        dataio.write_json(out / "exp2_report.json", report)
    return report
