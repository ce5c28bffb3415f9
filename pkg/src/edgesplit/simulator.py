"""Synthetic system contexts, carbon-intensity traces and datasets."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import _kernels
from .conformal import CalibrationSet
from .cost_model import CONTEXT_FIELDS, CostModel, SystemContext
from .errors import InvalidParameterError, SamplingError, TraceFormatError
from .predictor import TrainingSet
from .shift import GaussianDensity, UniformBoxDensity

SECONDS_PER_DAY = 86400.0


@dataclass(frozen=True)
class ContextBox:
    """Per-dimension sampling range; lower == upper pins a dimension."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=np.float64)
        upper = np.asarray(self.upper, dtype=np.float64)
        if lower.shape != (len(CONTEXT_FIELDS),) or upper.shape != lower.shape:
            raise InvalidParameterError(f"box bounds need {len(CONTEXT_FIELDS)} entries")
        if np.any(lower > upper):
            raise InvalidParameterError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def ranges(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def density(self) -> UniformBoxDensity:
        return UniformBoxDensity(self.lower, self.upper)

    def to_dict(self) -> dict:
        return {f: [float(lo), float(hi)] for f, lo, hi in zip(CONTEXT_FIELDS, self.lower, self.upper)}

    @classmethod
    def from_dict(cls, data: dict) -> "ContextBox":
        missing = [f for f in CONTEXT_FIELDS if f not in data]
        if missing:
            raise InvalidParameterError(f"box is missing: {', '.join(missing)}")
        return cls(np.array([data[f][0] for f in CONTEXT_FIELDS], dtype=float),
                   np.array([data[f][1] for f in CONTEXT_FIELDS], dtype=float))


DEFAULT_BOX = ContextBox(
    lower=np.array([2.0, 0.0, 0.0, 230.0, 0.0, 400.0, 50.0]),
    upper=np.array([60.0, 1.0, 1.0, 921.6, 1.0, 1479.0, 700.0]),
)


def sample_context_uniform(box: ContextBox, rng: np.random.Generator) -> SystemContext:
    return SystemContext.from_array(sample_contexts_uniform(box, 1, rng)[0])


def sample_contexts_uniform(box: ContextBox, n: int, rng: np.random.Generator) -> np.ndarray:
    return box.lower + box.ranges * rng.random((n, len(CONTEXT_FIELDS)))


def sample_contexts_shifted(gaussian: GaussianDensity, box: ContextBox, n: int,
                            rng: np.random.Generator, max_attempts: int = 1000) -> np.ndarray:
    """Gaussian draws, each redrawn until it falls inside the box."""
    out = np.empty((n, len(CONTEXT_FIELDS)))
    std = gaussian.std
    for i in range(n):
        for _ in range(max_attempts):
            x = gaussian.mean + std * rng.standard_normal(len(CONTEXT_FIELDS))
            if np.all(x >= box.lower) and np.all(x <= box.upper):
                out[i] = x
                break
        else:
            raise SamplingError(f"no in-box draw after {max_attempts} attempts; the Gaussian barely overlaps the box")
    return out


def sample_context_shifted(gaussian: GaussianDensity, box: ContextBox, rng: np.random.Generator,
                           max_attempts: int = 1000) -> SystemContext:
    return SystemContext.from_array(sample_contexts_shifted(gaussian, box, 1, rng, max_attempts)[0])


# --- carbon-intensity traces -------------------------------------------------

@dataclass(frozen=True)
class CarbonTrace:
    timestamps: np.ndarray
    intensities: np.ndarray
    region: str = ""

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=np.float64)
        ci = np.asarray(self.intensities, dtype=np.float64)
        if t.shape != ci.shape or t.ndim != 1:
            raise TraceFormatError("timestamps and intensities must be 1-d and equally long")
        if t.size and np.any(np.diff(t) <= 0):
            raise TraceFormatError("timestamps must be strictly increasing")
        if np.any(ci < 0) or not np.all(np.isfinite(ci)):
            raise TraceFormatError("intensities must be finite and >= 0")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "intensities", ci)

    def __len__(self):
        return self.timestamps.size

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.timestamps.tolist(), self.intensities.tolist()))

    def intensity_at(self, t: float) -> float:
        """Linear interpolation, held constant beyond either end."""
        if not len(self):
            raise TraceFormatError("empty trace")
        return float(np.interp(t, self.timestamps, self.intensities))


def synth_carbon_trace(pattern: str, base: float, amplitude: float, duration: float,
                       seed: int = 0, step: float = 300.0, peak_hour: float = 2.0,
                       region: str = "") -> CarbonTrace:
    """Synthetic intensity series in one of three regimes.

    ``diurnal`` is a 24 h cosine peaking at ``peak_hour`` (night),
    ``volatile`` a bounded random walk with occasional jumps, ``stable``
    the base value with small noise.
    """
    if step <= 0 or duration < 0:
        raise InvalidParameterError("step must be > 0 and duration >= 0")
    if amplitude < 0:
        raise InvalidParameterError("amplitude must be >= 0")
    t = np.arange(0.0, duration + 0.5 * step, step)
    rng = np.random.default_rng(seed)
    if pattern == "diurnal":
        phase = 2.0 * np.pi * (t - peak_hour * 3600.0) / SECONDS_PER_DAY
        ci = base + amplitude * np.cos(phase)
    elif pattern == "volatile":
        ci = np.empty_like(t)
        level = base
        lo, hi = base - amplitude, base + amplitude
        for i in range(t.size):
            if rng.random() < 0.05:
                level = rng.uniform(lo, hi)
            else:
                level = level + 0.1 * amplitude * rng.standard_normal()
            level = min(max(level, lo), hi)
            ci[i] = level
    elif pattern == "stable":
        ci = base + np.clip(0.05 * amplitude * rng.standard_normal(t.size), -amplitude, amplitude)
    else:
        raise InvalidParameterError(f"unknown trace pattern {pattern!r}")
    return CarbonTrace(t, np.maximum(ci, 0.0), region or pattern)


TRACE_HEADER = ("timestamp_s", "intensity_gco2_per_kwh")


def _data_lines(handle):
    """Yield (line_number, text) for non-blank, non-comment lines."""
    for number, line in enumerate(handle, start=1):
        if line.strip() and not line.lstrip().startswith("#"):
            yield number, line


def load_carbon_trace(path, region: str = "") -> CarbonTrace:
    path = Path(path)
    if not path.exists():
        raise TraceFormatError(f"trace file not found: {path}")
    timestamps, intensities = [], []
    with path.open(newline="") as handle:
        rows = _data_lines(handle)
        try:
            _, header_line = next(rows)
        except StopIteration:
            raise TraceFormatError(f"{path}: empty trace file") from None
        header = tuple(h.strip() for h in next(csv.reader([header_line])))
        if header != TRACE_HEADER:
            raise TraceFormatError(f"{path}: expected header {','.join(TRACE_HEADER)}, got {','.join(header)}")
        prev = -math.inf
        for number, line in rows:
            cells = next(csv.reader([line]))
            if len(cells) != 2:
                raise TraceFormatError(f"{path}: row {number}: expected 2 columns, got {len(cells)}")
            try:
                ts, ci = float(cells[0]), float(cells[1])
            except ValueError:
                raise TraceFormatError(f"{path}: row {number}: non-numeric value") from None
            if not ts > prev:
                raise TraceFormatError(f"{path}: row {number}: timestamp {ts} is not increasing")
            if not (ci >= 0 and math.isfinite(ci)):
                raise TraceFormatError(f"{path}: row {number}: intensity must be >= 0, got {ci}")
            prev = ts
            timestamps.append(ts)
            intensities.append(ci)
    if not timestamps:
        raise TraceFormatError(f"{path}: trace has no samples")
    return CarbonTrace(np.array(timestamps), np.array(intensities), region or path.stem)


def save_carbon_trace(trace: CarbonTrace, path, comment: str | None = None) -> None:
    with Path(path).open("w", newline="") as handle:
        if comment:
            handle.write(f"# {comment}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for ts, ci in zip(trace.timestamps, trace.intensities):
            writer.writerow([repr(float(ts)), repr(float(ci))])


# --- datasets ---------------------------------------------------------------

def build_training_set(cost_model: CostModel, box: ContextBox, n_contexts: int,
                       noise_rel_std: float, rng: np.random.Generator,
                       return_table: bool = False):
    """D_t: every split of every sampled context, q perturbed by relative noise.

    Rows are grouped by context, splits 0..N in order.
    """
    if noise_rel_std < 0:
        raise InvalidParameterError("noise_rel_std must be >= 0")
    ctx = sample_contexts_uniform(box, n_contexts, rng)
    table = cost_model.table(ctx)
    k = cost_model.n_layers + 1
    q = table[_kernels.Q].reshape(-1)
    if noise_rel_std > 0:
        q = q * (1.0 + noise_rel_std * rng.standard_normal(q.size))
    data = TrainingSet(np.repeat(ctx, k, axis=0), np.tile(np.arange(k), n_contexts), q, cost_model.n_layers)
    if return_table:
        return data, table
    return data


def build_calibration_set(cost_model: CostModel, box: ContextBox, n: int,
                          rng: np.random.Generator) -> CalibrationSet:
    """D_c: uniform contexts labelled with the noise-free oracle split."""
    ctx = sample_contexts_uniform(box, n, rng)
    return CalibrationSet(ctx, cost_model.optimal(ctx))


def build_shifted_set(cost_model: CostModel, gaussian: GaussianDensity, box: ContextBox, n: int,
                      rng: np.random.Generator) -> CalibrationSet:
    """Oracle-labelled test contexts drawn from the shifted distribution."""
    ctx = sample_contexts_shifted(gaussian, box, n, rng)
    return CalibrationSet(ctx, cost_model.optimal(ctx))


# --- bandwidth probing ------------------------------------------------------

@dataclass(frozen=True)
class SimulatedLink:
    """Round trip = fixed latency + size / bandwidth, optionally jittered."""

    bandwidth: float
    latency: float
    jitter_rel: float = 0.0

    def __post_init__(self):
        if not (self.bandwidth > 0 and self.latency >= 0 and 0 <= self.jitter_rel < 1):
            raise InvalidParameterError("need bandwidth > 0, latency >= 0 and 0 <= jitter_rel < 1")

    def response_time(self, size_mb: float, rng: np.random.Generator | None = None) -> float:
        return float(self.response_time_exact(size_mb, rng))

    def response_time_exact(self, size_mb: float, rng: np.random.Generator | None = None) -> Fraction:
        """Round trip on the simulator's virtual clock, kept as an exact rational."""
        rtt = Fraction(self.latency) + Fraction(size_mb) / Fraction(self.bandwidth)
        if self.jitter_rel > 0:
            if rng is None:
                raise InvalidParameterError("a jittered link needs an rng")
            rtt *= 1 + Fraction(rng.uniform(-self.jitter_rel, self.jitter_rel))
        return rtt


def estimate_bandwidth(link: SimulatedLink, small_packet: float, large_packet: float,
                       rng: np.random.Generator | None = None) -> float:
    """Two-packet probe: size difference over response-time difference.

    Virtual time is exact, so on a noiseless link the fixed latency cancels
    without rounding and the configured bandwidth comes back bit-for-bit.
    """
    if not large_packet > small_packet:
        raise InvalidParameterError("large_packet must exceed small_packet")
    rtt_small = link.response_time_exact(small_packet, rng)
    rtt_large = link.response_time_exact(large_packet, rng)
    if not rtt_large > rtt_small:
        raise InvalidParameterError("probe response times did not increase with packet size")
    return float((Fraction(large_packet) - Fraction(small_packet)) / (rtt_large - rtt_small))


# --- context dynamics ---------------------------------------------------------

def reflect(x: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Fold values back into [lower, upper] (pinned dims stay at the bound)."""
    span = upper - lower
    out = x.copy()
    live = span > 0
    if np.any(live):
        period = 2.0 * span[live]
        r = np.mod(x[live] - lower[live], period)
        out[live] = lower[live] + np.where(r > span[live], period - r, r)
    out[~live] = lower[~live]
    return out


def random_walk_step(x: np.ndarray, box: ContextBox, step_rel: np.ndarray,
                     rng: np.random.Generator) -> np.ndarray:
    """One Gaussian step per dimension, std = step_rel x range, reflected."""
    proposal = x + step_rel * box.ranges * rng.standard_normal(x.size)
    return reflect(proposal, box.lower, box.upper)
