"""File formats shared by the library, the CLI, and external tools.

* Dataset CSV: one configuration per row, K*D columns ordered
  x1_1..x1_D, ..., xK_1..xK_D, one header row, 17 significant digits
  (lossless float64 round-trip).
* Samples CSV: dataset columns followed by logq, u, logw.
* Checkpoint JSON: {model, hyperparams, params, seed, created_by,
  loss_history}.
* Minima JSON: list of {coords, u_min, signature, n_hits}.

All writers are deterministic functions of their inputs (sorted keys, no
timestamps), so re-running a command reproduces files byte-for-byte.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .coupling import CouplingFlow
from .energy import DoubleWell, DoubleWellParams
from .eqflow import EquivariantFlow
from .errors import ConfigError
from .generator import MinimumRecord, WeightedSample
from .training import Checkpoint

__all__ = [
    "write_dataset", "read_dataset",
    "write_samples", "read_samples",
    "write_checkpoint", "read_checkpoint", "build_flow", "flow_from_checkpoint",
    "write_minima", "read_minima",
    "write_json", "read_json",
    "write_histogram",
]

_FMT = "%.17g"


def _coord_header(K: int, D: int) -> list[str]:
    return [f"x{i + 1}_{d + 1}" for i in range(K) for d in range(D)]


def write_dataset(path, X: np.ndarray) -> None:
    """Write an (n, K, D) array of configurations as CSV."""
    X = np.asarray(X, dtype=np.float64)
    n, K, D = X.shape
    flat = X.reshape(n, K * D)
    with open(path, "w") as fh:
        fh.write(",".join(_coord_header(K, D)) + "\n")
        for row in flat:
            fh.write(",".join(_FMT % v for v in row) + "\n")


def _read_rows(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        first = fh.readline()
        if first and not _is_numeric_row(first):
            pass  # header consumed
        elif first:
            rows.append([float(v) for v in first.strip().split(",")])
        for line in fh:
            if line.strip():
                rows.append([float(v) for v in line.strip().split(",")])
    return np.array(rows, dtype=np.float64)


def _is_numeric_row(line: str) -> bool:
    try:
        [float(v) for v in line.strip().split(",")]
        return True
    except ValueError:
        return False


def read_dataset(path, K: int, D: int) -> np.ndarray:
    """Read a dataset CSV back into an (n, K, D) array."""
    flat = _read_rows(path)
    if flat.size == 0:
        return np.empty((0, K, D))
    if flat.shape[1] != K * D:
        raise ValueError(f"{path}: expected {K * D} columns for K={K}, D={D}, found {flat.shape[1]}")
    return flat.reshape(-1, K, D)


def write_samples(path, samples: list[WeightedSample]) -> None:
    with open(path, "w") as fh:
        if samples:
            K, D = samples[0].x.shape
            fh.write(",".join(_coord_header(K, D) + ["logq", "u", "logw"]) + "\n")
        else:
            fh.write("logq,u,logw\n")
        for s in samples:
            vals = list(s.x.reshape(-1)) + [s.logq, s.u, s.logw]
            fh.write(",".join(_FMT % v for v in vals) + "\n")


def read_samples(path, K: int, D: int) -> list[WeightedSample]:
    flat = _read_rows(path)
    out = []
    for row in flat:
        if row.size != K * D + 3:
            raise ValueError(f"{path}: expected {K * D + 3} columns, found {row.size}")
        out.append(WeightedSample(row[: K * D].reshape(K, D),
                                  float(row[-3]), float(row[-2]), float(row[-1])))
    return out


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_checkpoint(path, ckpt: Checkpoint) -> None:
    write_json(path, {
        "model": ckpt.model,
        "hyperparams": ckpt.hyperparams,
        "params": [float(v) for v in ckpt.params],
        "seed": ckpt.seed,
        "created_by": ckpt.created_by,
        "loss_history": ckpt.loss_history,
    })


def read_checkpoint(path) -> Checkpoint:
    doc = read_json(path)
    return Checkpoint(
        model=doc["model"],
        hyperparams=doc["hyperparams"],
        params=np.array(doc["params"], dtype=np.float64),
        seed=doc["seed"],
        created_by=doc.get("created_by", ""),
        loss_history=doc.get("loss_history", []),
    )


def build_flow(model_type: str, K: int, D: int, hyperparams: dict | None = None):
    """Construct a flow model of the given type with the given hyperparameters."""
    hp = dict(hyperparams or {})
    if model_type == "eqflow":
        return EquivariantFlow(K, D,
                               M=int(hp.get("M", 32)),
                               r_max=float(hp.get("r_max", 8.0)),
                               n_steps=int(hp.get("n_steps", 32)),
                               t0=float(hp.get("t0", 0.0)),
                               t1=float(hp.get("t1", 1.0)))
    if model_type == "realnvp":
        return CouplingFlow(K, D,
                            n_layers=int(hp.get("L", 8)),
                            hidden=int(hp.get("hidden", 64)),
                            clamp=float(hp.get("clamp", 5.0)),
                            init_seed=int(hp.get("init_seed", 0)))
    raise ConfigError(f"unknown model type {model_type!r}")


def flow_from_checkpoint(ckpt: Checkpoint, K: int, D: int):
    """Rebuild the flow a checkpoint describes and load its parameters."""
    flow = build_flow(ckpt.model, K, D, ckpt.hyperparams.get("model", {}))
    flow.params.set_values(ckpt.params)
    return flow


def energy_from_dict(d: dict | None) -> DoubleWell:
    d = d or {}
    return DoubleWell(DoubleWellParams(a=float(d.get("a", -4.0)),
                                       b=float(d.get("b", 0.9)),
                                       d0=float(d.get("d0", 4.0))))


def write_minima(path, records: list[MinimumRecord]) -> None:
    write_json(path, [
        {
            "coords": [[float(v) for v in row] for row in rec.x_min],
            "u_min": float(rec.u_min),
            "signature": [float(v) for v in rec.signature],
            "n_hits": int(rec.n_hits),
        }
        for rec in records
    ])


def read_minima(path) -> list[dict]:
    return read_json(path)


def write_histogram(path, values: np.ndarray, n_bins: int = 50,
                    lo: float | None = None, hi: float | None = None) -> None:
    """Binned histogram as CSV rows (bin_left, bin_right, count, density)."""
    values = np.asarray(values, dtype=np.float64)
    if lo is None:
        lo = float(values.min()) if values.size else 0.0
    if hi is None:
        hi = float(values.max()) if values.size else 1.0
    if hi <= lo:
        hi = lo + 1.0
    counts, edges = np.histogram(values, bins=n_bins, range=(lo, hi))
    total = max(counts.sum(), 1)
    with open(path, "w") as fh:
        fh.write("bin_left,bin_right,count,density\n")
        for i, c in enumerate(counts):
            width = edges[i + 1] - edges[i]
            fh.write(f"{edges[i]:.17g},{edges[i + 1]:.17g},{c},{c / (total * width):.17g}\n")


def path_in(out_dir, name: str) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / name
