"""Pick one split from a conformal set, plus the comparison baselines."""

from __future__ import annotations

import logging

import numpy as np

from . import _kernels
from .conformal import PredictionInterval
from .cost_model import CostBreakdown, CostModel, DnnProfile, ObjectiveWeights, contexts_to_array, objective_q
from .errors import EmptyIntervalError, InvalidParameterError, NotFittedError
from .predictor import implicit_argmin

logger = logging.getLogger(__name__)

INTERVAL_STRATEGIES = ("random", "mean", "adaptive")
BASELINE_STRATEGIES = ("edge-only", "cloud-only", "neurosurgeon")
STRATEGIES = INTERVAL_STRATEGIES + BASELINE_STRATEGIES


def _require_members(interval: PredictionInterval):
    if not interval.members:
        raise EmptyIntervalError(f"empty prediction interval (q_hat={interval.q_hat:.6g})")


def choose_random(interval: PredictionInterval, seed) -> int:
    """Uniformly random member; reproducible for a given seed."""
    _require_members(interval)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return interval.members[int(rng.integers(len(interval.members)))][0]


def choose_mean(interval: PredictionInterval) -> int:
    """Member whose predicted q is closest to the members' mean predicted q."""
    _require_members(interval)
    q = np.array(interval.predicted_q)
    return interval.members[int(np.argmin(np.abs(q - q.mean())))][0]


def choose_adaptive(interval: PredictionInterval) -> int:
    """Member with the smallest predicted q (lowest layer on ties)."""
    _require_members(interval)
    return interval.members[int(np.argmin(interval.predicted_q))][0]


def fallback(ctx, model) -> int:
    y = implicit_argmin(model, ctx)
    logger.info("empty interval, falling back to predictor argmin y=%d", y)
    return y


def baseline_edge_only(dnn, ctx, power, weights, **kwargs) -> CostBreakdown:
    return objective_q(dnn, ctx, power, weights, dnn.n_layers, **kwargs)


def baseline_cloud_only(dnn, ctx, power, weights, **kwargs) -> CostBreakdown:
    return objective_q(dnn, ctx, power, weights, 0, **kwargs)


class NeurosurgeonModel:
    """Per-layer linear regressions on (bandwidth, server utilization).

    Predicts each layer's edge latency, server latency and edge energy; the
    transmission term uses the known output sizes over the given bandwidth.
    Carbon never enters its objective.
    """

    def __init__(self, dnn: DnnProfile, weights: ObjectiveWeights):
        self.dnn = dnn
        self.weights = weights
        self.coef = None  # (3, N, 3): quantity x layer x [1, bandwidth, server_util]
        _, _, self._sizes = dnn.arrays()

    @staticmethod
    def _design(bandwidth, server_util):
        bandwidth = np.atleast_1d(np.asarray(bandwidth, dtype=np.float64))
        server_util = np.atleast_1d(np.asarray(server_util, dtype=np.float64))
        return np.column_stack([np.ones_like(bandwidth), bandwidth, server_util])

    def fit(self, cost_model: CostModel, contexts, noise_rel_std: float = 0.0, rng=None) -> "NeurosurgeonModel":
        """Profile every layer on ``contexts`` and regress on the two features."""
        ctx = contexts_to_array(contexts)
        if ctx.shape[0] < 3:
            raise InvalidParameterError("need at least 3 profiling contexts")
        table = cost_model.table(ctx)
        t_edge = np.diff(table[_kernels.T_EDGE], axis=1)
        t_server = -np.diff(table[_kernels.T_SERVER], axis=1)
        e_edge = np.diff(table[_kernels.E_EDGE], axis=1)
        targets = np.stack([t_edge, t_server, e_edge])  # (3, M, N)
        if noise_rel_std > 0:
            rng = rng if rng is not None else np.random.default_rng(0)
            targets = targets * (1.0 + noise_rel_std * rng.standard_normal(targets.shape))
        x = self._design(ctx[:, _kernels.BW], ctx[:, _kernels.SRV_UTIL])
        n = self.dnn.n_layers
        coef = np.empty((3, n, 3))
        for k in range(3):
            sol, *_ = np.linalg.lstsq(x, targets[k], rcond=None)
            coef[k] = sol.T
        self.coef = coef
        return self

    def layer_predictions(self, bandwidth: float, server_util: float):
        """(edge latency, server latency, edge energy) per layer."""
        if self.coef is None:
            raise NotFittedError("Neurosurgeon regressions are not fitted")
        x = self._design(bandwidth, server_util)[0]
        pred = self.coef @ x
        return pred[0], pred[1], pred[2]

    def objective(self, bandwidth: float, server_util: float) -> np.ndarray:
        """Predicted lambda1 * T + lambda2 * E_edge for every split."""
        t_e, t_s, e_e = self.layer_predictions(bandwidth, server_util)
        edge_cum = np.concatenate([[0.0], np.cumsum(t_e)])
        server_cum = np.concatenate([np.cumsum(t_s[::-1])[::-1], [0.0]])
        energy_cum = np.concatenate([[0.0], np.cumsum(e_e)])
        latency = edge_cum + self._sizes / bandwidth + server_cum
        return self.weights.lambda1 * latency + self.weights.lambda2 * energy_cum

    def choose(self, bandwidth: float, server_util: float) -> int:
        return int(np.argmin(self.objective(bandwidth, server_util)))


class GroundTruthNeurosurgeon(NeurosurgeonModel):
    """Regressions replaced by the exact per-layer costs at one fixed context."""

    def __init__(self, cost_model: CostModel, ctx):
        super().__init__(cost_model.dnn, cost_model.weights)
        table = cost_model.table([ctx])
        self._truth = (
            np.diff(table[_kernels.T_EDGE][0]),
            -np.diff(table[_kernels.T_SERVER][0]),
            np.diff(table[_kernels.E_EDGE][0]),
        )
        self.coef = np.zeros((3, self.dnn.n_layers, 3))

    def layer_predictions(self, bandwidth, server_util):
        return self._truth


def baseline_neurosurgeon(dnn: DnnProfile, models: NeurosurgeonModel, bandwidth: float,
                          server_util: float) -> int:
    if models is None:
        raise NotFittedError("Neurosurgeon regressions are not fitted")
    if models.dnn.n_layers != dnn.n_layers:
        raise InvalidParameterError("regressions were fitted for a different profile")
    return models.choose(bandwidth, server_util)
