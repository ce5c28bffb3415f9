"""Tick-by-tick replay of a drifting system under a carbon-intensity trace."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .cost_model import CONTEXT_FIELDS, ObjectiveWeights, SystemContext
from .errors import EdgeSplitError, InvalidParameterError
from .pipeline import Pipeline
from .shift import fit_gaussian
from .simulator import CarbonTrace, ContextBox, random_walk_step

_CI = CONTEXT_FIELDS.index("carbon_intensity")

RECORD_FIELDS = (
    "tick", "time_s", *CONTEXT_FIELDS, "chosen", "oracle", "interval_size", "fallback",
    "t_total", "e_edge", "carbon", "q", "error",
)


@dataclass(frozen=True)
class ScenarioConfig:
    duration: float = 86400.0
    tick: float = 86.4
    step_rel: tuple = (0.05, 0.05, 0.05, 0.03, 0.05, 0.03, 0.0)
    trace: CarbonTrace | None = None
    seed: int = 0
    weights: ObjectiveWeights = ObjectiveWeights()
    alpha: float = 0.1
    start: tuple | None = None
    measurement_rel_std: float = 0.2

    def __post_init__(self):
        if not self.tick > 0:
            raise InvalidParameterError("tick must be > 0")
        if not self.duration >= 0:
            raise InvalidParameterError("duration must be >= 0")
        if len(self.step_rel) != len(CONTEXT_FIELDS):
            raise InvalidParameterError(f"step_rel needs {len(CONTEXT_FIELDS)} entries")

    @property
    def n_ticks(self) -> int:
        return int(math.floor(self.duration / self.tick + 1e-9))


@dataclass
class ScenarioReport:
    strategy: str
    records: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    config_digest: str = ""

    def to_csv(self) -> str:
        buf = io.StringIO()
        if self.config_digest:
            buf.write(f"# config_sha256: {self.config_digest}\n")
        writer = csv.DictWriter(buf, fieldnames=RECORD_FIELDS, lineterminator="\n")
        writer.writeheader()
        for rec in self.records:
            writer.writerow({k: _fmt(rec[k]) for k in RECORD_FIELDS})
        return buf.getvalue()

    def to_json(self) -> str:
        body = {"config_sha256": self.config_digest, "strategy": self.strategy, "aggregates": self.aggregates}
        return json.dumps(body, indent=2, sort_keys=True) + "\n"

    def write(self, out_dir, stem: str | None = None) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = stem or f"replay_{self.strategy}"
        csv_path, json_path = out_dir / f"{stem}.csv", out_dir / f"{stem}.json"
        csv_path.write_text(self.to_csv())
        json_path.write_text(self.to_json())
        return csv_path, json_path


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return value


def context_stream(scenario: ScenarioConfig, box: ContextBox):
    """Yield (tick, time, context array); independent of any strategy."""
    rng = np.random.default_rng([scenario.seed, 0])
    x = np.array(scenario.start, dtype=np.float64) if scenario.start is not None else box.center.copy()
    step = np.asarray(scenario.step_rel, dtype=np.float64)
    for tick in range(scenario.n_ticks):
        t = tick * scenario.tick
        if tick > 0:
            x = random_walk_step(x, box, step, rng)
        row = x.copy()
        if scenario.trace is not None:
            row[_CI] = scenario.trace.intensity_at(t)
        yield tick, t, row


def replay_scenario(scenario: ScenarioConfig, pipeline: Pipeline, strategy: str,
                    box: ContextBox, config_digest: str = "") -> ScenarioReport:
    """Run one strategy over the scenario and score it with the true cost model.

    When the pipeline carries a calibration density, the test density is a
    Gaussian fitted to the first tick's context (a single measurement).
    Per-tick failures are recorded in the ``error`` column, not raised.
    """
    pipeline = pipeline.with_alpha(scenario.alpha)
    cost_model = pipeline.cost_model
    if cost_model.weights != scenario.weights:
        cost_model = cost_model.with_weights(scenario.weights)
        pipeline = Pipeline(cost_model, pipeline.model, pipeline.scored, scenario.alpha,
                            pipeline.calib_density, pipeline.test_density, pipeline.neurosurgeon)
    strategy_rng = np.random.default_rng([scenario.seed, 1])
    report = ScenarioReport(strategy, config_digest=config_digest)

    for tick, t, row in context_stream(scenario, box):
        if tick == 0 and pipeline.calib_density is not None:
            pipeline = pipeline.with_test_density(
                fit_gaussian(SystemContext.from_array(row), scenario.measurement_rel_std, pipeline.calib_density))
        table = cost_model.table(row[None, :])
        y_opt = int(np.argmin(table[_kernels.Q][0]))
        rec = {"tick": tick, "time_s": float(t)}
        rec.update({f: float(v) for f, v in zip(CONTEXT_FIELDS, row)})
        rec.update({"oracle": y_opt, "chosen": None, "interval_size": None, "fallback": None,
                    "t_total": None, "e_edge": None, "carbon": None, "q": None, "error": None})
        try:
            dec = pipeline.decide(strategy, row[None, :], rng=strategy_rng, y_opt=np.array([y_opt]))
        except EdgeSplitError as exc:
            rec["error"] = f"{type(exc).__name__}: {exc}"
        else:
            y = int(dec.chosen[0])
            rec.update({
                "chosen": y,
                "interval_size": int(dec.interval_sizes[0]),
                "fallback": int(dec.fallback[0]),
                "t_total": float(table[_kernels.T_TOTAL][0, y]),
                "e_edge": float(table[_kernels.E_EDGE][0, y]),
                "carbon": float(table[_kernels.CARBON][0, y]),
                "q": float(table[_kernels.Q][0, y]),
            })
        report.records.append(rec)

    report.aggregates = aggregate(report.records)
    return report


def aggregate(records) -> dict:
    ok = [r for r in records if r["error"] is None]
    out = {"n_ticks": len(records), "n_failed": len(records) - len(ok)}
    if not ok:
        return out
    carbon = np.array([r["carbon"] for r in ok])
    out.update({
        "mean_carbon": float(carbon.mean()),
        "total_carbon": float(carbon.sum()),
        "mean_latency": float(np.mean([r["t_total"] for r in ok])),
        "mean_edge_energy": float(np.mean([r["e_edge"] for r in ok])),
        "mean_q": float(np.mean([r["q"] for r in ok])),
        "error_rate": float(np.mean([r["chosen"] != r["oracle"] for r in ok])),
        "mean_interval_size": float(np.mean([r["interval_size"] for r in ok])),
        "fallback_count": int(sum(r["fallback"] for r in ok)),
        "switches": int(sum(a["chosen"] != b["chosen"] for a, b in zip(ok, ok[1:]))),
    })
    return out
