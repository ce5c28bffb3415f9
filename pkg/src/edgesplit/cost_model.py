"""Analytic per-frame latency, edge energy and carbon model of a split DNN.

A partition index ``y`` in ``0..N`` means layers ``1..y`` run on the edge
device, the output of layer ``y`` (or the raw input when ``y == 0``) crosses
the network, and layers ``y+1..N`` run on the server.

Units: seconds, joules, megabits, Mbps, MHz, gCO2/kWh.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import InvalidContextError, InvalidParameterError, InvalidPartitionError

CONTEXT_FIELDS = (
    "bandwidth",
    "server_gpu_util",
    "edge_gpu_util",
    "edge_gpu_freq",
    "edge_cpu_util",
    "edge_cpu_freq",
    "carbon_intensity",
)
_UTIL_FIELDS = ("server_gpu_util", "edge_gpu_util", "edge_cpu_util")


@dataclass(frozen=True)
class LayerProfile:
    index: int
    base_edge_latency: float
    base_server_latency: float
    output_size: float

    def __post_init__(self):
        for name in ("base_edge_latency", "base_server_latency", "output_size"):
            value = getattr(self, name)
            if not value >= 0:
                raise InvalidParameterError(f"layer {self.index}: {name} must be >= 0, got {value}")
        if self.index < 1:
            raise InvalidParameterError(f"layer index must be >= 1, got {self.index}")


@dataclass(frozen=True)
class DnnProfile:
    """Ordered per-layer reference costs; ``input_size`` is d_0."""

    layers: tuple[LayerProfile, ...]
    input_size: float
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise InvalidParameterError("a DNN profile needs at least one layer")
        for expected, layer in enumerate(self.layers, start=1):
            if layer.index != expected:
                raise InvalidParameterError(
                    f"layer indices must be 1..N contiguous; position {expected} has index {layer.index}"
                )
        if not self.input_size >= 0:
            raise InvalidParameterError("input_size must be >= 0")

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def output_size(self, y: int) -> float:
        """d_y, with d_0 the raw input."""
        return self.input_size if y == 0 else self.layers[y - 1].output_size

    @classmethod
    def from_lists(cls, edge, server, sizes, input_size, name="custom"):
        layers = [
            LayerProfile(i + 1, float(e), float(s), float(d))
            for i, (e, s, d) in enumerate(zip(edge, server, sizes, strict=True))
        ]
        return cls(tuple(layers), float(input_size), name)

    def arrays(self):
        """(edge_base, server_base, sizes incl. d_0) as float64 arrays."""
        edge = np.array([l.base_edge_latency for l in self.layers], dtype=np.float64)
        server = np.array([l.base_server_latency for l in self.layers], dtype=np.float64)
        sizes = np.array([self.input_size] + [l.output_size for l in self.layers], dtype=np.float64)
        return edge, server, sizes

    def to_dict(self):
        return {
            "name": self.name,
            "input_size": self.input_size,
            "layers": [asdict(l) for l in self.layers],
        }

    @classmethod
    def from_dict(cls, data):
        layers = tuple(LayerProfile(**l) for l in data["layers"])
        return cls(layers, float(data["input_size"]), data.get("name", "custom"))


@dataclass(frozen=True)
class SystemContext:
    bandwidth: float
    server_gpu_util: float
    edge_gpu_util: float
    edge_gpu_freq: float
    edge_cpu_util: float
    edge_cpu_freq: float
    carbon_intensity: float

    def validate(self) -> "SystemContext":
        values = self.as_array()
        if not np.all(np.isfinite(values)):
            raise InvalidContextError(f"non-finite context value in {self}")
        if self.bandwidth <= 0:
            raise InvalidContextError(f"bandwidth must be > 0, got {self.bandwidth}")
        for name in _UTIL_FIELDS:
            u = getattr(self, name)
            if not 0.0 <= u <= 1.0:
                raise InvalidContextError(f"{name} must lie in [0, 1], got {u}")
        if self.edge_gpu_freq <= 0 or self.edge_cpu_freq <= 0:
            raise InvalidContextError("frequencies must be > 0")
        if self.carbon_intensity < 0:
            raise InvalidContextError("carbon_intensity must be >= 0")
        return self

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in CONTEXT_FIELDS], dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "SystemContext":
        return cls(*(float(v) for v in values))

    def replace(self, **changes) -> "SystemContext":
        data = {f: getattr(self, f) for f in CONTEXT_FIELDS}
        data.update(changes)
        return SystemContext(**data)


def contexts_to_array(contexts: Sequence[SystemContext]) -> np.ndarray:
    if isinstance(contexts, np.ndarray):
        return np.asarray(contexts, dtype=np.float64).reshape(-1, len(CONTEXT_FIELDS))
    if not contexts:
        return np.empty((0, len(CONTEXT_FIELDS)))
    return np.stack([c.as_array() for c in contexts])


@dataclass(frozen=True)
class Contention:
    """Slowdown coefficients for co-running load on each side."""

    k_gpu: float = 1.0
    k_cpu: float = 0.5
    k_server: float = 1.0


@dataclass(frozen=True)
class PowerModel:
    """Component power draws in watts.

    Edge CPU and GPU power grow linearly with utilization and with clock
    offset from the reference frequency; each is floored at zero.
    """

    p_cpu_base: float = 1.8
    p_gpu_base: float = 3.5
    p_others: float = 1.2
    cpu_util_slope: float = 1.5
    gpu_util_slope: float = 2.5
    gpu_freq_slope: float = 0.004
    cpu_freq_slope: float = 0.001
    p_net: float = 1.5
    p_server_base: float = 180.0
    server_util_slope: float = 120.0
    freq_ref_gpu: float = 921.6
    freq_ref_cpu: float = 1479.0
    joules_per_kwh: float = 3.6e6

    def __post_init__(self):
        for f in fields(self):
            if f.name in ("gpu_freq_slope", "cpu_freq_slope"):
                continue
            if getattr(self, f.name) < 0:
                raise InvalidParameterError(f"{f.name} must be >= 0")
        if self.freq_ref_gpu <= 0 or self.freq_ref_cpu <= 0:
            raise InvalidParameterError("reference frequencies must be > 0")

    def edge_cpu_power(self, ctx: SystemContext) -> float:
        return max(self.p_cpu_base + self.cpu_util_slope * ctx.edge_cpu_util
                   + self.cpu_freq_slope * (ctx.edge_cpu_freq - self.freq_ref_cpu), 0.0)

    def edge_gpu_power(self, ctx: SystemContext) -> float:
        return max(self.p_gpu_base + self.gpu_util_slope * ctx.edge_gpu_util
                   + self.gpu_freq_slope * (ctx.edge_gpu_freq - self.freq_ref_gpu), 0.0)

    def edge_power(self, ctx: SystemContext) -> float:
        return self.edge_cpu_power(ctx) + self.edge_gpu_power(ctx) + self.p_others

    def server_power(self, ctx: SystemContext) -> float:
        return self.p_server_base + self.server_util_slope * ctx.server_gpu_util


@dataclass(frozen=True)
class ObjectiveWeights:
    """Preference weights on latency, edge energy and carbon."""

    lambda1: float = 1.0
    lambda2: float = 0.1
    lambda3: float = 3000.0

    def __post_init__(self):
        lam = (self.lambda1, self.lambda2, self.lambda3)
        if any((not math.isfinite(v)) or v < 0 for v in lam):
            raise InvalidParameterError(f"objective weights must be finite and >= 0, got {lam}")
        if not any(v > 0 for v in lam):
            raise InvalidParameterError("objective weights must not all be zero")

    def as_array(self) -> np.ndarray:
        return np.array([self.lambda1, self.lambda2, self.lambda3], dtype=np.float64)


@dataclass(frozen=True)
class CostBreakdown:
    t_edge: float
    t_trans: float
    t_server: float
    t_total: float
    e_edge: float
    e_trans: float
    e_server: float
    carbon: float
    q: float


def _check_partition(dnn: DnnProfile, y) -> int:
    if isinstance(y, (bool, np.bool_)) or int(y) != y or not 0 <= y <= dnn.n_layers:
        raise InvalidPartitionError(f"partition index must be in 0..{dnn.n_layers}, got {y!r}")
    return int(y)


def edge_latency(dnn: DnnProfile, ctx: SystemContext, y: int,
                 contention: Contention = Contention(), power: PowerModel | None = None) -> float:
    """Time to run layers 1..y on the edge device under ``ctx``."""
    y = _check_partition(dnn, y)
    freq_ref = (power or PowerModel()).freq_ref_gpu
    scale = (freq_ref / ctx.edge_gpu_freq) * (
        1.0 + contention.k_gpu * ctx.edge_gpu_util + contention.k_cpu * ctx.edge_cpu_util
    )
    total = 0.0
    for layer in dnn.layers[:y]:
        total += layer.base_edge_latency * scale
    return total


def transmission_latency(dnn: DnnProfile, ctx: SystemContext, y: int) -> float:
    y = _check_partition(dnn, y)
    if not ctx.bandwidth > 0:
        raise InvalidContextError(f"bandwidth must be > 0, got {ctx.bandwidth}")
    return dnn.output_size(y) / ctx.bandwidth


def server_latency(dnn: DnnProfile, ctx: SystemContext, y: int,
                   contention: Contention = Contention()) -> float:
    y = _check_partition(dnn, y)
    scale = 1.0 + contention.k_server * ctx.server_gpu_util
    total = 0.0
    for layer in dnn.layers[y:]:
        total += layer.base_server_latency * scale
    return total


def edge_energy(dnn, ctx, power: PowerModel, y, contention: Contention = Contention()) -> float:
    """Edge battery draw, charged only while the edge computes."""
    return power.edge_power(ctx) * edge_latency(dnn, ctx, y, contention, power)


def transmission_energy(dnn, ctx, power: PowerModel, y) -> float:
    return power.p_net * transmission_latency(dnn, ctx, y)


def server_energy(dnn, ctx, power: PowerModel, y, contention: Contention = Contention()) -> float:
    return power.server_power(ctx) * server_latency(dnn, ctx, y, contention)


def carbon_footprint(dnn, ctx, power: PowerModel, y, contention: Contention = Contention()) -> float:
    """Grams of CO2 for one frame: total joules converted to kWh times intensity."""
    energy = (edge_energy(dnn, ctx, power, y, contention)
              + transmission_energy(dnn, ctx, power, y)
              + server_energy(dnn, ctx, power, y, contention))
    return energy / power.joules_per_kwh * ctx.carbon_intensity


def objective_q(dnn, ctx, power: PowerModel, weights: ObjectiveWeights, y,
                contention: Contention = Contention()) -> CostBreakdown:
    ctx.validate()
    t_e = edge_latency(dnn, ctx, y, contention, power)
    t_t = transmission_latency(dnn, ctx, y)
    t_s = server_latency(dnn, ctx, y, contention)
    t_total = t_e + t_t + t_s
    e_e = power.edge_power(ctx) * t_e
    e_t = power.p_net * t_t
    e_s = power.server_power(ctx) * t_s
    carbon = (e_e + e_t + e_s) / power.joules_per_kwh * ctx.carbon_intensity
    q = weights.lambda1 * t_total + weights.lambda2 * e_e + weights.lambda3 * carbon
    return CostBreakdown(t_e, t_t, t_s, t_total, e_e, e_t, e_s, carbon, q)


def optimal_partition(dnn, ctx, power: PowerModel, weights: ObjectiveWeights,
                      contention: Contention = Contention()) -> tuple[int, CostBreakdown]:
    """Exhaustive search over all N+1 split points; ties go to the smaller index."""
    best_y, best = 0, None
    for y in range(dnn.n_layers + 1):
        cost = objective_q(dnn, ctx, power, weights, y, contention)
        if best is None or cost.q < best.q:
            best_y, best = y, cost
    return best_y, best


def pack_params(power: PowerModel, contention: Contention = Contention()) -> np.ndarray:
    """Flatten model parameters into the layout expected by the kernels."""
    p = np.empty(_kernels.N_PARAMS)
    p[_kernels.K_GPU] = contention.k_gpu
    p[_kernels.K_CPU] = contention.k_cpu
    p[_kernels.K_SERVER] = contention.k_server
    p[_kernels.P_CPU_BASE] = power.p_cpu_base
    p[_kernels.P_GPU_BASE] = power.p_gpu_base
    p[_kernels.P_OTHERS] = power.p_others
    p[_kernels.CPU_UTIL_SLOPE] = power.cpu_util_slope
    p[_kernels.GPU_UTIL_SLOPE] = power.gpu_util_slope
    p[_kernels.GPU_FREQ_SLOPE] = power.gpu_freq_slope
    p[_kernels.CPU_FREQ_SLOPE] = power.cpu_freq_slope
    p[_kernels.P_NET] = power.p_net
    p[_kernels.P_SERVER_BASE] = power.p_server_base
    p[_kernels.SERVER_UTIL_SLOPE] = power.server_util_slope
    p[_kernels.FREQ_REF_GPU] = power.freq_ref_gpu
    p[_kernels.FREQ_REF_CPU] = power.freq_ref_cpu
    p[_kernels.JOULES_PER_KWH] = power.joules_per_kwh
    return p


class CostModel:
    """Bundles a profile with its power, contention and weight settings.

    ``table`` evaluates all partitions for a batch of contexts through the
    compiled kernel; the scalar functions above stay the reference.
    """

    def __init__(self, dnn: DnnProfile, power: PowerModel = PowerModel(),
                 weights: ObjectiveWeights = ObjectiveWeights(),
                 contention: Contention = Contention()):
        self.dnn = dnn
        self.power = power
        self.weights = weights
        self.contention = contention
        self._edge, self._server, self._sizes = dnn.arrays()
        self._params = pack_params(power, contention)

    @property
    def n_layers(self) -> int:
        return self.dnn.n_layers

    def with_weights(self, weights: ObjectiveWeights) -> "CostModel":
        return CostModel(self.dnn, self.power, weights, self.contention)

    def table(self, contexts) -> np.ndarray:
        """Shape (9, M, N+1); index rows with the constants in ``_kernels``."""
        ctx = contexts_to_array(contexts)
        if ctx.shape[0] and (np.any(ctx[:, _kernels.BW] <= 0) or np.any(ctx[:, _kernels.GPU_FREQ] <= 0)):
            raise InvalidContextError("bandwidth and edge GPU frequency must be > 0")
        return _kernels.cost_table(ctx, self._edge, self._server, self._sizes,
                                   self._params, self.weights.as_array())

    def q_table(self, contexts) -> np.ndarray:
        return self.table(contexts)[_kernels.Q]

    def optimal(self, contexts) -> np.ndarray:
        """Oracle split index per context (first minimum wins ties)."""
        return np.argmin(self.q_table(contexts), axis=1)

    def breakdown(self, ctx: SystemContext, y: int) -> CostBreakdown:
        return objective_q(self.dnn, ctx, self.power, self.weights, y, self.contention)

    def optimal_partition(self, ctx: SystemContext) -> tuple[int, CostBreakdown]:
        return optimal_partition(self.dnn, ctx, self.power, self.weights, self.contention)
