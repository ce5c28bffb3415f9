"""Command-line entry point.

Exit codes: 0 on success, 2 for invalid configuration or missing inputs,
3 for runtime or training failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (build_box, build_cost_model, digest, file_digest, load_config, measurement, training_config,
                     validate)
from .datasets import read_labelled_csv, read_manifest, read_training_csv, write_dataset_dir
from .cost_model import ObjectiveWeights
from .decision import NeurosurgeonModel
from .errors import ConfigError, EdgeSplitError, SchemaVersionError, TraceFormatError, TrainingError
from .pipeline import ALL_STRATEGIES, Pipeline, evaluate
from .predictor import PredictorModel, train
from .replay import ScenarioConfig, replay_scenario
from .shift import fit_gaussian, fit_uniform
from .simulator import load_carbon_trace, save_carbon_trace, synth_carbon_trace

logger = logging.getLogger("edgesplit")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
EVAL_STRATEGIES = ("adaptive", "random", "mean", "edge-only", "cloud-only", "neurosurgeon")
REPLAY_STRATEGIES = ("adaptive", "neurosurgeon")


def _dump_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _overrides(args) -> dict:
    out = {}
    for key in ("seed", "alpha", "strategy"):
        value = getattr(args, key, None)
        if value is not None and not isinstance(value, list):
            out[key] = value
    return out


def _resolve_config(args, manifest: dict | None = None) -> dict:
    """--config wins; otherwise the dataset manifest's config; otherwise defaults."""
    if args.config is not None:
        return load_config(args.config, _overrides(args))
    base = manifest["config"] if manifest else None
    if base is None:
        return load_config(None, _overrides(args))
    tmp = dict(base)
    tmp.update(_overrides(args))
    validate(tmp)
    return tmp


def _dataset_paths(dataset: Path, manifest: dict) -> dict:
    files = manifest.get("files", {})
    return {k: dataset / files.get(k, f"{k}.csv") for k in ("training", "calibration", "test")}


def cmd_generate(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    manifest = write_dataset_dir(args.out, cfg, parallel=args.parallel)
    print(json.dumps({"out": str(args.out), "rows": manifest["rows"], "config_sha256": manifest["config_sha256"]}))
    return EXIT_OK


def cmd_train(args) -> int:
    dataset = Path(args.dataset)
    manifest = read_manifest(dataset)
    cfg = _resolve_config(args, manifest)
    cost_model = build_cost_model(cfg)
    paths = _dataset_paths(dataset, manifest)
    data = read_training_csv(paths["training"], cost_model.n_layers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run_digest = digest({"command": "train", "config": cfg, "training": file_digest(paths["training"])})
    try:
        model = train(data, training_config(cfg), n_layers=cost_model.n_layers)
    except TrainingError as exc:
        _dump_json(out / "training_report.json",
                   {"config_sha256": run_digest, "status": "failed", "error": str(exc),
                    "report": exc.diagnostics})
        raise
    model.save(out / "model.json")
    _dump_json(out / "training_report.json",
               {"config_sha256": run_digest, "status": "ok", "report": model.report})
    print(json.dumps({"model": str(out / "model.json"), **{k: model.report.get(k) for k in
                                                           ("heldout_mse", "heldout_relative_mse")}}))
    return EXIT_OK


def _load_model(path) -> PredictorModel:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"model file not found: {path}")
    try:
        return PredictorModel.load(path)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: not a model file ({exc})") from None


def _pipeline(cfg, model, paths, alpha) -> tuple[Pipeline, object]:
    """Calibrated pipeline with a fitted calibration box and Neurosurgeon regressions."""
    cost_model = build_cost_model(cfg)
    calibration = read_labelled_csv(paths["calibration"])
    training = read_training_csv(paths["training"], cost_model.n_layers)
    calib_box = fit_uniform(calibration.contexts)
    profiling = np.unique(training.contexts, axis=0)
    neurosurgeon = NeurosurgeonModel(cost_model.dnn, cost_model.weights).fit(cost_model, profiling)
    pipe = Pipeline.build(cost_model, model, calibration, alpha, calib_density=calib_box,
                          neurosurgeon=neurosurgeon)
    return pipe, calib_box


def _strategies(args, default) -> list[str]:
    chosen = args.strategies or list(default)
    if args.strategy is not None and args.strategy not in chosen:
        chosen = [args.strategy] + chosen
    return chosen


def cmd_evaluate(args) -> int:
    dataset = Path(args.dataset)
    manifest = read_manifest(dataset)
    cfg = _resolve_config(args, manifest)
    paths = _dataset_paths(dataset, manifest)
    model = _load_model(args.model)
    alpha = float(cfg["alpha"])
    strategies = _strategies(args, EVAL_STRATEGIES)
    pipe, calib_box = _pipeline(cfg, model, paths, alpha)
    if not args.vanilla:
        pipe = pipe.with_test_density(fit_gaussian(measurement(cfg), float(cfg["shift"]["rel_std"]), calib_box))
    else:
        pipe = Pipeline(pipe.cost_model, pipe.model, pipe.scored, alpha, None, None, pipe.neurosurgeon)
    test = read_labelled_csv(paths["test"])
    run_digest = digest({
        "command": "evaluate", "config": cfg, "strategies": strategies, "vanilla": bool(args.vanilla),
        "inputs": {k: file_digest(p) for k, p in paths.items()} | {"model": file_digest(args.model)},
    })
    metrics = evaluate(pipe, test, strategies, seed=int(cfg["seed"]))
    metrics.update({"config_sha256": run_digest, "seed": int(cfg["seed"])})
    out = Path(args.out)
    _dump_json(out / "metrics.json", metrics)
    print(json.dumps({name: round(m["error_rate"], 4) for name, m in metrics["strategies"].items()}))
    return EXIT_OK


def _trace_from_cfg(cfg, trace_path):
    if trace_path is not None:
        return load_carbon_trace(trace_path)
    trace_cfg = cfg["scenario"]["trace"]
    return synth_carbon_trace(trace_cfg["pattern"], float(trace_cfg["base"]), float(trace_cfg["amplitude"]),
                              float(cfg["scenario"]["duration"]), seed=int(cfg["seed"]),
                              step=float(trace_cfg.get("step", 300.0)))


def cmd_replay(args) -> int:
    dataset = Path(args.dataset)
    manifest = read_manifest(dataset)
    cfg = _resolve_config(args, manifest)
    paths = _dataset_paths(dataset, manifest)
    model = _load_model(args.model)
    trace = _trace_from_cfg(cfg, args.trace)
    sc = cfg["scenario"]
    scenario = ScenarioConfig(
        duration=float(sc["duration"]), tick=float(sc["tick"]), step_rel=tuple(sc["step_rel"]), trace=trace,
        seed=int(cfg["seed"]), weights=ObjectiveWeights(**cfg["weights"]), alpha=float(cfg["alpha"]),
        measurement_rel_std=float(sc["measurement_rel_std"]),
    )
    strategies = _strategies(args, REPLAY_STRATEGIES)
    pipe, _ = _pipeline(cfg, model, paths, scenario.alpha)
    inputs = {k: file_digest(p) for k, p in paths.items()} | {"model": file_digest(args.model)}
    if args.trace is not None:
        inputs["trace"] = file_digest(args.trace)
    run_digest = digest({"command": "replay", "config": cfg, "strategies": strategies, "inputs": inputs})
    out = Path(args.out)
    box = build_box(cfg)
    reports = {}
    for name in strategies:
        report = replay_scenario(scenario, pipe, name, box, config_digest=run_digest)
        report.write(out)
        reports[name] = report.aggregates
    comparison = {"config_sha256": run_digest, "seed": scenario.seed, "strategies": reports}
    if "adaptive" in reports and "neurosurgeon" in reports:
        a, n = reports["adaptive"].get("mean_carbon"), reports["neurosurgeon"].get("mean_carbon")
        if a is not None and n:
            comparison["carbon_ratio_adaptive_vs_neurosurgeon"] = a / n
    _dump_json(out / "comparison.json", comparison)
    print(json.dumps({k: v.get("mean_carbon") for k, v in reports.items()}))
    return EXIT_OK


def cmd_trace_synth(args) -> int:
    trace = synth_carbon_trace(args.pattern, args.base, args.amplitude, args.duration,
                               seed=args.seed or 0, step=args.step, region=args.region or "")
    payload = {"pattern": args.pattern, "base": args.base, "amplitude": args.amplitude,
               "duration": args.duration, "step": args.step, "seed": args.seed or 0}
    save_carbon_trace(trace, args.out, comment=f"config_sha256: {digest(payload)}")
    print(json.dumps({"out": str(args.out), "samples": len(trace)}))
    return EXIT_OK


def cmd_trace_validate(args) -> int:
    trace = load_carbon_trace(args.path)
    print(json.dumps({
        "path": str(args.path), "samples": len(trace),
        "start_s": float(trace.timestamps[0]), "end_s": float(trace.timestamps[-1]),
        "min": float(trace.intensities.min()), "max": float(trace.intensities.max()),
        "mean": float(trace.intensities.mean()),
    }))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgesplit", description="Carbon-aware DNN partitioning with "
                                     "shift-weighted conformal prediction.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--seed", type=int, help="root seed (overrides config)")
        p.add_argument("--out", type=Path, required=True, help=out_help)

    p = sub.add_parser("generate", help="simulate training/calibration/test datasets")
    common(p, "output dataset directory")
    p.add_argument("--parallel", action="store_true", help="fan chunks out over processes (same output)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="fit the surrogate objective model")
    common(p, "output directory for model.json")
    p.add_argument("--dataset", type=Path, required=True)
    p.set_defaults(func=cmd_train)

    for name, func, default, help_text in (
        ("evaluate", cmd_evaluate, EVAL_STRATEGIES, "score strategies on the test set"),
        ("replay", cmd_replay, REPLAY_STRATEGIES, "replay a drifting scenario under a carbon trace"),
    ):
        p = sub.add_parser(name, help=help_text)
        common(p, "output directory")
        p.add_argument("--dataset", type=Path, required=True)
        p.add_argument("--model", type=Path, required=True)
        p.add_argument("--alpha", type=float)
        p.add_argument("--strategy", choices=ALL_STRATEGIES, help="strategy to include (also stored in config)")
        p.add_argument("--strategies", nargs="+", choices=ALL_STRATEGIES,
                       help=f"strategies to run (default: {' '.join(default)})")
        if name == "evaluate":
            p.add_argument("--vanilla", action="store_true", help="unweighted quantile (no shift correction)")
        else:
            p.add_argument("--trace", type=Path, help="carbon-intensity CSV (default: synthesize from config)")
        p.set_defaults(func=func)

    trace = sub.add_parser("trace", help="carbon-intensity trace utilities")
    tsub = trace.add_subparsers(dest="trace_command", required=True)
    p = tsub.add_parser("synth", help="write a synthetic trace CSV")
    p.add_argument("--pattern", choices=("diurnal", "volatile", "stable"), default="diurnal")
    p.add_argument("--base", type=float, default=375.0)
    p.add_argument("--amplitude", type=float, default=250.0)
    p.add_argument("--duration", type=float, default=86400.0)
    p.add_argument("--step", type=float, default=300.0)
    p.add_argument("--region")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_trace_synth)
    p = tsub.add_parser("validate", help="check a trace CSV and print a summary")
    p.add_argument("path", type=Path)
    p.set_defaults(func=cmd_trace_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SchemaVersionError, TraceFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EdgeSplitError, RuntimeError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
