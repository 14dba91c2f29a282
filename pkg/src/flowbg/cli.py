"""Command-line orchestration.

Subcommands: sample-mcmc, train, eval, generate, minimize, experiment1,
experiment2.  Every command is a pure function of (config file, input
files, seed) to output files; re-running reproduces outputs byte-for-byte.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
4 non-convergence.  Failures also emit one machine-readable JSON object on
stderr: {"error": <class>, "message": <text>}.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import dataio, experiments
from .config import RunConfig, load_config, validate_config
from .errors import ConfigError, DivergenceError, NonConvergenceError, TrainingError
from .generator import distinct_minima, generate, minimize_many
from .mcmc import run_chain
from .training import train_loop

_EXIT_CODES = [
    (ConfigError, 2),
    (DivergenceError, 3),
    (TrainingError, 3),
    (NonConvergenceError, 4),
]


def _out_path(cfg: RunConfig, out_dir: str, key: str, default: str) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / cfg.paths.get(key, default)


def _load(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = validate_config({})
    if args.seed is not None:
        doc = cfg.to_dict()
        doc["seed"] = args.seed
        cfg = validate_config(doc)
    return cfg


def cmd_sample_mcmc(cfg: RunConfig, args) -> None:
    energy = cfg.energy()
    mcmc_cfg = cfg.mcmc
    if mcmc_cfg.init is None:
        start = experiments.chain_start_configuration(cfg.energy_params, cfg.K, cfg.D)
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])
        mcmc_cfg.init = start + cfg.experiment["noise_scale"] * rng.standard_normal((cfg.K, cfg.D))
        mcmc_cfg.init -= mcmc_cfg.init.mean(axis=0)
    chain = run_chain(mcmc_cfg, energy)
    dataio.write_dataset(_out_path(cfg, args.out, "dataset", "dataset.csv"), chain.samples)
    dataio.write_json(_out_path(cfg, args.out, "chain_meta", "chain_meta.json"), chain.metadata())


def cmd_train(cfg: RunConfig, args) -> None:
    data = dataio.read_dataset(args.data, cfg.K, cfg.D)
    history = None
    if args.resume:
        prev = dataio.read_checkpoint(args.resume)
        flow = dataio.flow_from_checkpoint(prev, cfg.K, cfg.D)
        history = prev.loss_history
    else:
        flow = dataio.build_flow(cfg.model_type, cfg.K, cfg.D, cfg.model_hyperparams)
    ckpt = train_loop(flow, cfg.energy(), data, cfg.train,
                      metrics_path=_out_path(cfg, args.out, "loss", "loss.csv"),
                      initial_history=history)
    dataio.write_checkpoint(_out_path(cfg, args.out, "checkpoint", "checkpoint.json"), ckpt)


def cmd_eval(cfg: RunConfig, args) -> None:
    ckpt = dataio.read_checkpoint(args.checkpoint)
    flow = dataio.flow_from_checkpoint(ckpt, cfg.K, cfg.D)
    data = dataio.read_dataset(args.data, cfg.K, cfg.D)
    rng = np.random.default_rng(cfg.seed)
    metrics = {
        "model": ckpt.model,
        "n": int(data.shape[0]),
        "nll_mean": experiments.mean_nll(flow, data),
        "invariance_probe": experiments.invariance_probe(flow, data, n_probes=100, rng=rng),
    }
    dataio.write_json(_out_path(cfg, args.out, "metrics", "metrics.json"), metrics)


def cmd_generate(cfg: RunConfig, args) -> None:
    ckpt = dataio.read_checkpoint(args.checkpoint)
    flow = dataio.flow_from_checkpoint(ckpt, cfg.K, cfg.D)
    n = args.n if args.n is not None else cfg.experiment["n_generate"]
    samples = generate(flow, cfg.energy(), n, np.random.default_rng(cfg.seed))
    dataio.write_samples(_out_path(cfg, args.out, "samples", "samples.csv"), samples)


def cmd_minimize(cfg: RunConfig, args) -> None:
    energy = cfg.energy()
    path = Path(args.data)
    try:
        starts = dataio.read_dataset(path, cfg.K, cfg.D)
    except ValueError:
        starts = np.stack([s.x for s in dataio.read_samples(path, cfg.K, cfg.D)])
    records = minimize_many(starts, energy, max_iter=300, threads=args.threads)
    reps = distinct_minima(records, tol=1e-3)
    reps.sort(key=lambda r: r.u_min)
    dataio.write_minima(_out_path(cfg, args.out, "minima", "minima.json"), reps)


def cmd_experiment1(cfg: RunConfig, args) -> None:
    experiments.experiment1(cfg, out_dir=args.out)


def cmd_experiment2(cfg: RunConfig, args) -> None:
    experiments.experiment2(cfg, out_dir=args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowbg",
                                     description="Boltzmann generators for small 2D particle systems")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run-config JSON (defaults apply if omitted)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=os.cpu_count(),
                       help="worker threads for batch minimization")
        p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("sample-mcmc", help="run a Metropolis chain, write dataset CSV + metadata")
    common(p)
    p.set_defaults(func=cmd_sample_mcmc)

    p = sub.add_parser("train", help="train the configured model on a dataset")
    common(p)
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--resume", help="checkpoint JSON to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="mean NLL and invariance probe of a checkpoint on a dataset")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("generate", help="draw weighted samples from a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("-n", type=int, default=None, help="number of samples")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("minimize", help="locally minimize configurations from a CSV")
    common(p)
    p.add_argument("--data", required=True, help="dataset or samples CSV")
    p.set_defaults(func=cmd_minimize)

    p = sub.add_parser("experiment1", help="trajectory-split generalization experiment")
    common(p)
    p.set_defaults(func=cmd_experiment1, default_experiment="experiment1")

    p = sub.add_parser("experiment2", help="metastable-state discovery experiment")
    common(p)
    p.set_defaults(func=cmd_experiment2, default_experiment="experiment2")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is None and getattr(args, "default_experiment", None):
            cfg = experiments.default_experiment_config(
                args.default_experiment, seed=args.seed if args.seed is not None else 0)
        else:
            cfg = _load(args)
        args.func(cfg, args)
    except Exception as exc:  # noqa: BLE001 - single exit point maps errors to codes
        payload = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(payload), file=sys.stderr)
        for klass, code in _EXIT_CODES:
            if isinstance(exc, klass):
                return code
        if isinstance(exc, (OSError, ValueError, KeyError)):
            return 2
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
