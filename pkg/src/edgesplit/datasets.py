"""Dataset generation with per-chunk seeds, and the CSV formats on disk.

Every chunk of contexts draws from its own generator seeded by
(root seed, stream, chunk index), so serial and parallel generation write
identical files.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import _kernels
from .conformal import CalibrationSet
from .config import build_box, build_cost_model, digest, measurement
from .errors import TraceFormatError
from .predictor import TrainingSet
from .shift import fit_gaussian
from .simulator import sample_contexts_shifted, sample_contexts_uniform

CHUNK = 500
TRAIN_STREAM, CALIB_STREAM, TEST_STREAM = 0, 1, 2

CONTEXT_COLUMNS = (
    "bandwidth_mbps", "server_gpu_util", "edge_gpu_util", "edge_gpu_freq_mhz",
    "edge_cpu_util", "edge_cpu_freq_mhz", "carbon_intensity",
)
TRAINING_COLUMNS = CONTEXT_COLUMNS + (
    "partition_point", "latency_s", "edge_energy_j", "trans_energy_j", "server_energy_j", "q",
)
LABELLED_COLUMNS = CONTEXT_COLUMNS + ("y_opt",)


def _chunks(n):
    return [(c, min(CHUNK, n - start)) for c, start in enumerate(range(0, n, CHUNK))]


def _training_chunk(args):
    cost_model, box, seed, chunk, n, noise = args
    rng = np.random.default_rng([seed, TRAIN_STREAM, chunk])
    ctx = sample_contexts_uniform(box, n, rng)
    table = cost_model.table(ctx)
    q = table[_kernels.Q]
    if noise > 0:
        q = q * (1.0 + noise * rng.standard_normal(q.shape))
    return ctx, table, q


def _calibration_chunk(args):
    cost_model, box, seed, chunk, n = args
    rng = np.random.default_rng([seed, CALIB_STREAM, chunk])
    ctx = sample_contexts_uniform(box, n, rng)
    return ctx, cost_model.optimal(ctx)


def _test_chunk(args):
    cost_model, box, gaussian, seed, chunk, n = args
    rng = np.random.default_rng([seed, TEST_STREAM, chunk])
    ctx = sample_contexts_shifted(gaussian, box, n, rng)
    return ctx, cost_model.optimal(ctx)


def _run(fn, jobs, parallel):
    if parallel and len(jobs) > 1:
        with ProcessPoolExecutor() as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def generate(cfg: dict, parallel: bool = False):
    """Build (training rows, training table, calibration set, test set)."""
    cost_model = build_cost_model(cfg)
    box = build_box(cfg)
    seed = int(cfg["seed"])
    sizes = cfg["sizes"]
    noise = float(cfg["noise_rel_std"])

    parts = _run(_training_chunk, [(cost_model, box, seed, c, n, noise) for c, n in _chunks(int(sizes["train"]))],
                 parallel)
    ctx = np.concatenate([p[0] for p in parts])
    table = np.concatenate([p[1] for p in parts], axis=1)
    q = np.concatenate([p[2] for p in parts])
    k = cost_model.n_layers + 1
    training = TrainingSet(np.repeat(ctx, k, axis=0), np.tile(np.arange(k), len(ctx)), q.reshape(-1),
                           cost_model.n_layers)

    parts = _run(_calibration_chunk, [(cost_model, box, seed, c, n) for c, n in _chunks(int(sizes["calibration"]))],
                 parallel)
    calibration = CalibrationSet(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))

    gaussian = fit_gaussian(measurement(cfg), float(cfg["shift"]["rel_std"]), box.density())
    parts = _run(_test_chunk, [(cost_model, box, gaussian, seed, c, n) for c, n in _chunks(int(sizes["test"]))],
                 parallel)
    test = CalibrationSet(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))
    return training, table, calibration, test


def _header(handle, config_digest):
    if config_digest:
        handle.write(f"# config_sha256: {config_digest}\n")


def write_training_csv(path, training: TrainingSet, table: np.ndarray, config_digest: str = "") -> None:
    flat = {name: table[idx].reshape(-1) for name, idx in (
        ("latency_s", _kernels.T_TOTAL), ("edge_energy_j", _kernels.E_EDGE),
        ("trans_energy_j", _kernels.E_TRANS), ("server_energy_j", _kernels.E_SERVER))}
    with Path(path).open("w", newline="") as handle:
        _header(handle, config_digest)
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(TRAINING_COLUMNS)
        for i in range(len(training)):
            writer.writerow([*map(repr, training.contexts[i].tolist()), int(training.y[i]),
                             repr(float(flat["latency_s"][i])), repr(float(flat["edge_energy_j"][i])),
                             repr(float(flat["trans_energy_j"][i])), repr(float(flat["server_energy_j"][i])),
                             repr(float(training.q[i]))])


def write_labelled_csv(path, data: CalibrationSet, config_digest: str = "") -> None:
    with Path(path).open("w", newline="") as handle:
        _header(handle, config_digest)
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(LABELLED_COLUMNS)
        for row, y in zip(data.contexts, data.y_opt):
            writer.writerow([*map(repr, row.tolist()), int(y)])


def _read_rows(path, columns):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with path.open(newline="") as handle:
        lines = (line for line in handle if line.strip() and not line.startswith("#"))
        reader = csv.reader(lines)
        header = tuple(next(reader, ()))
        if header != columns:
            raise TraceFormatError(f"{path}: unexpected header {','.join(header)}")
        rows = [r for r in reader]
    return np.array(rows, dtype=np.float64) if rows else np.empty((0, len(columns)))


def read_training_csv(path, n_layers: int) -> TrainingSet:
    arr = _read_rows(path, TRAINING_COLUMNS)
    n_ctx = len(CONTEXT_COLUMNS)
    return TrainingSet(arr[:, :n_ctx], arr[:, n_ctx].astype(np.int64), arr[:, -1], n_layers)


def read_labelled_csv(path) -> CalibrationSet:
    arr = _read_rows(path, LABELLED_COLUMNS)
    return CalibrationSet(arr[:, :-1], arr[:, -1].astype(np.int64))


def write_dataset_dir(out_dir, cfg: dict, parallel: bool = False) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    training, table, calibration, test = generate(cfg, parallel)
    config_digest = digest(cfg)
    write_training_csv(out_dir / "training.csv", training, table, config_digest)
    write_labelled_csv(out_dir / "calibration.csv", calibration, config_digest)
    write_labelled_csv(out_dir / "test.csv", test, config_digest)
    cost_model = build_cost_model(cfg)
    manifest = {
        "config_sha256": config_digest,
        "config": cfg,
        "profile": cost_model.dnn.to_dict(),
        "rows": {"training": len(training), "calibration": len(calibration), "test": len(test)},
        "files": {"training": "training.csv", "calibration": "calibration.csv", "test": "test.csv"},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def read_manifest(dataset_dir) -> dict:
    path = Path(dataset_dir) / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"no manifest.json in {dataset_dir}")
    return json.loads(path.read_text())
