"""CLI contract: subcommands, files, determinism, exit codes."""

import json

import numpy as np
import pytest

from flowbg import dataio
from flowbg.cli import main

TINY = {
    "seed": 3,
    "system": {"K": 2, "D": 2},
    "model": {"type": "eqflow", "hyperparams": {"M": 6, "r_max": 8.0, "n_steps": 4}},
    "train": {"batch_size": 16, "n_iters_ml": 5, "n_iters_mixed": 3, "kl_weight": 0.5},
    "mcmc": {"n_samples": 60, "proposal_scale": 0.2,
             "init": [[0.0, 0.0], [5.5, 0.0]]},
    "experiment": {"n_generate": 8},
}


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(TINY))
    return path


def run(args):
    return main([str(a) for a in args])


class TestSampleMcmc:
    def test_writes_dataset_and_metadata(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        assert run(["sample-mcmc", "--config", tiny_config, "--out", out]) == 0
        data = dataio.read_dataset(out / "dataset.csv", 2, 2)
        assert data.shape == (60, 2, 2)
        meta = json.loads((out / "chain_meta.json").read_text())
        assert meta["n_samples"] == 60
        assert meta["n_accepted"] <= meta["n_proposals"]

    def test_byte_identical_rerun(self, tiny_config, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        run(["sample-mcmc", "--config", tiny_config, "--out", out1])
        run(["sample-mcmc", "--config", tiny_config, "--out", out2])
        assert (out1 / "dataset.csv").read_bytes() == (out2 / "dataset.csv").read_bytes()
        assert (out1 / "chain_meta.json").read_bytes() == (out2 / "chain_meta.json").read_bytes()

    def test_seed_override_changes_output(self, tiny_config, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        run(["sample-mcmc", "--config", tiny_config, "--out", out1])
        run(["sample-mcmc", "--config", tiny_config, "--seed", 99, "--out", out2])
        assert (out1 / "dataset.csv").read_bytes() != (out2 / "dataset.csv").read_bytes()


class TestTrainEvalGenerate:
    def test_full_pipeline(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        run(["sample-mcmc", "--config", tiny_config, "--out", out])
        assert run(["train", "--config", tiny_config, "--data", out / "dataset.csv",
                    "--out", out]) == 0
        ckpt = dataio.read_checkpoint(out / "checkpoint.json")
        assert ckpt.model == "eqflow"
        assert len(ckpt.loss_history) == 8
        assert ckpt.hyperparams["train"]["kl_weight"] == 0.5
        loss_lines = (out / "loss.csv").read_text().splitlines()
        assert loss_lines[0] == "iter,nll,kl,total,grad_norm,excluded_count"
        assert len(loss_lines) == 9

        assert run(["eval", "--config", tiny_config, "--checkpoint", out / "checkpoint.json",
                    "--data", out / "dataset.csv", "--out", out]) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert set(metrics) == {"model", "n", "nll_mean", "invariance_probe"}
        assert metrics["invariance_probe"]["rotation"] < 1e-4

        assert run(["generate", "--config", tiny_config, "--checkpoint", out / "checkpoint.json",
                    "-n", 12, "--out", out]) == 0
        samples = dataio.read_samples(out / "samples.csv", 2, 2)
        assert len(samples) == 12

        assert run(["minimize", "--config", tiny_config, "--data", out / "samples.csv",
                    "--out", out]) == 0
        minima = json.loads((out / "minima.json").read_text())
        assert len(minima) >= 1
        assert all(len(m["signature"]) == 1 for m in minima)

    def test_resume_appends_history(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        run(["sample-mcmc", "--config", tiny_config, "--out", out])
        run(["train", "--config", tiny_config, "--data", out / "dataset.csv", "--out", out])
        first = dataio.read_checkpoint(out / "checkpoint.json")
        out2 = tmp_path / "resumed"
        run(["train", "--config", tiny_config, "--data", out / "dataset.csv",
             "--resume", out / "checkpoint.json", "--out", out2])
        second = dataio.read_checkpoint(out2 / "checkpoint.json")
        assert len(second.loss_history) == len(first.loss_history) + 8

    def test_train_deterministic(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        run(["sample-mcmc", "--config", tiny_config, "--out", out])
        o1, o2 = tmp_path / "t1", tmp_path / "t2"
        run(["train", "--config", tiny_config, "--data", out / "dataset.csv", "--out", o1])
        run(["train", "--config", tiny_config, "--data", out / "dataset.csv", "--out", o2])
        assert (o1 / "checkpoint.json").read_bytes() == (o2 / "checkpoint.json").read_bytes()

    def test_realnvp_dispatch(self, tmp_path):
        doc = dict(TINY)
        doc["model"] = {"type": "realnvp", "hyperparams": {"L": 2, "hidden": 8}}
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps(doc))
        out = tmp_path / "out"
        run(["sample-mcmc", "--config", cfg, "--out", out])
        assert run(["train", "--config", cfg, "--data", out / "dataset.csv", "--out", out]) == 0
        assert dataio.read_checkpoint(out / "checkpoint.json").model == "realnvp"


class TestErrors:
    def test_bad_config_exit_code_and_stderr_json(self, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"unknown_section": 1}))
        assert run(["sample-mcmc", "--config", cfg, "--out", tmp_path]) == 2
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert err["error"] == "ConfigError"

    def test_missing_data_file(self, tiny_config, tmp_path, capsys):
        code = run(["train", "--config", tiny_config, "--data", tmp_path / "none.csv",
                    "--out", tmp_path])
        assert code == 2
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert "message" in err

    def test_paths_section_overrides_names(self, tmp_path):
        doc = dict(TINY)
        doc["paths"] = {"dataset": "chain.csv"}
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps(doc))
        out = tmp_path / "out"
        run(["sample-mcmc", "--config", cfg, "--out", out])
        assert (out / "chain.csv").exists()
