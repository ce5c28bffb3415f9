"""Implicit surrogate of the objective: (context, candidate split) -> Q.

A two-hidden-layer ReLU network written directly in numpy and trained with
Adam on mean-squared error against standardized targets. The same model
both proposes a split (argmin over candidates) and scores calibration points.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cost_model import CONTEXT_FIELDS, SystemContext, contexts_to_array
from .errors import InvalidParameterError, NotFittedError, SchemaVersionError, TrainingError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
N_FEATURES = len(CONTEXT_FIELDS) + 1


@dataclass(frozen=True)
class TrainingSample:
    ctx: SystemContext
    y: int
    q: float


@dataclass
class TrainingSet:
    """Array-backed D_t: one row per (context, candidate split)."""

    contexts: np.ndarray  # (M, 7)
    y: np.ndarray  # (M,)
    q: np.ndarray  # (M,)
    n_layers: int

    def __post_init__(self):
        self.contexts = np.asarray(self.contexts, dtype=np.float64).reshape(-1, len(CONTEXT_FIELDS))
        self.y = np.asarray(self.y, dtype=np.int64)
        self.q = np.asarray(self.q, dtype=np.float64)
        if not (len(self.contexts) == len(self.y) == len(self.q)):
            raise InvalidParameterError("training arrays must have equal length")
        if len(self.y) and (self.y.min() < 0 or self.y.max() > self.n_layers):
            raise InvalidParameterError(f"split index outside 0..{self.n_layers}")

    def __len__(self):
        return len(self.y)

    def __iter__(self):
        for row, y, q in zip(self.contexts, self.y, self.q):
            yield TrainingSample(SystemContext.from_array(row), int(y), float(q))

    @classmethod
    def from_samples(cls, samples: Sequence[TrainingSample], n_layers: int) -> "TrainingSet":
        return cls(
            contexts_to_array([s.ctx for s in samples]),
            np.array([s.y for s in samples], dtype=np.int64),
            np.array([s.q for s in samples], dtype=np.float64),
            n_layers,
        )


@dataclass(frozen=True)
class TrainingConfig:
    hidden: int = 64
    epochs: int = 100
    learning_rate: float = 3e-3
    batch_size: int = 256
    seed: int = 0
    holdout_fraction: float = 0.1
    max_relative_mse: float = 0.05


@dataclass
class PredictorModel:
    feature_min: np.ndarray
    feature_max: np.ndarray
    params: list  # [W1, b1, W2, b2, W3, b3]
    q_mean: float
    q_scale: float
    n_layers: int
    config: TrainingConfig = field(default_factory=TrainingConfig)
    report: dict = field(default_factory=dict)

    def features(self, contexts, ys) -> np.ndarray:
        """Min-max normalized context columns (clamped to [0, 1]) plus y/N."""
        ctx = contexts_to_array(contexts)
        span = self.feature_max - self.feature_min
        safe = np.where(span > 0, span, 1.0)
        x = np.empty((ctx.shape[0], N_FEATURES))
        x[:, :-1] = np.clip((ctx - self.feature_min) / safe, 0.0, 1.0)
        x[:, :-1][:, span <= 0] = 0.0
        x[:, -1] = np.asarray(ys, dtype=np.float64) / self.n_layers
        return x

    def predict_features(self, x: np.ndarray) -> np.ndarray:
        out = _forward(self.params, x)[0]
        return out[:, 0] * self.q_scale + self.q_mean

    def predict_table(self, contexts) -> np.ndarray:
        """Predicted Q for every candidate split; shape (M, N+1)."""
        ctx = contexts_to_array(contexts)
        m, k = ctx.shape[0], self.n_layers + 1
        rows = np.repeat(ctx, k, axis=0)
        ys = np.tile(np.arange(k), m)
        return self.predict_features(self.features(rows, ys)).reshape(m, k)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "mlp",
            "n_layers": self.n_layers,
            "feature_min": self.feature_min.tolist(),
            "feature_max": self.feature_max.tolist(),
            "q_mean": self.q_mean,
            "q_scale": self.q_scale,
            "params": [p.tolist() for p in self.params],
            "config": asdict(self.config),
            "report": self.report,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PredictorModel":
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(
                f"model file has schema version {version!r}, this build reads {SCHEMA_VERSION}"
            )
        return cls(
            feature_min=np.array(data["feature_min"], dtype=np.float64),
            feature_max=np.array(data["feature_max"], dtype=np.float64),
            params=[np.array(p, dtype=np.float64) for p in data["params"]],
            q_mean=float(data["q_mean"]),
            q_scale=float(data["q_scale"]),
            n_layers=int(data["n_layers"]),
            config=TrainingConfig(**data["config"]),
            report=dict(data.get("report", {})),
        )

    def save(self, path) -> None:
        # repr round-trips float64 exactly
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "PredictorModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


class OracleModel:
    """Stand-in predictor that returns the exact objective from a cost model."""

    def __init__(self, cost_model):
        self.cost_model = cost_model
        self.n_layers = cost_model.n_layers

    def predict_table(self, contexts) -> np.ndarray:
        return self.cost_model.q_table(contexts_to_array(contexts))


class ConstantModel:
    def __init__(self, value: float, n_layers: int):
        self.value = float(value)
        self.n_layers = n_layers

    def predict_table(self, contexts) -> np.ndarray:
        m = contexts_to_array(contexts).shape[0]
        return np.full((m, self.n_layers + 1), self.value)


def _forward(params, x):
    w1, b1, w2, b2, w3, b3 = params
    z1 = x @ w1 + b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ w2 + b2
    h2 = np.maximum(z2, 0.0)
    out = h2 @ w3 + b3
    return out, (x, z1, h1, z2, h2)


def _backward(params, cache, grad_out):
    w1, b1, w2, b2, w3, b3 = params
    x, z1, h1, z2, h2 = cache
    gw3 = h2.T @ grad_out
    gb3 = grad_out.sum(axis=0)
    g2 = (grad_out @ w3.T) * (z2 > 0)
    gw2 = h1.T @ g2
    gb2 = g2.sum(axis=0)
    g1 = (g2 @ w2.T) * (z1 > 0)
    gw1 = x.T @ g1
    gb1 = g1.sum(axis=0)
    return [gw1, gb1, gw2, gb2, gw3, gb3]


def _init_params(rng, hidden):
    # He init for hidden layers; zero output layer so a constant target is
    # fitted exactly from the first step
    w1 = rng.normal(0.0, np.sqrt(2.0 / N_FEATURES), (N_FEATURES, hidden))
    w2 = rng.normal(0.0, np.sqrt(2.0 / hidden), (hidden, hidden))
    return [w1, np.zeros(hidden), w2, np.zeros(hidden), np.zeros((hidden, 1)), np.zeros(1)]


def train(data: TrainingSet | Iterable[TrainingSample], config: TrainingConfig = TrainingConfig(),
          n_layers: int | None = None) -> PredictorModel:
    """Fit the surrogate on D_t.

    Raises TrainingError when the held-out relative MSE (MSE over the
    held-out variance of q) exceeds ``config.max_relative_mse``.
    """
    if not isinstance(data, TrainingSet):
        samples = list(data)
        if n_layers is None:
            raise InvalidParameterError("n_layers is required when training from samples")
        data = TrainingSet.from_samples(samples, n_layers)
    if len(data) < 100:
        raise InvalidParameterError(f"need at least 100 training samples, got {len(data)}")
    if not np.all(np.isfinite(data.q)):
        raise InvalidParameterError("training targets must be finite")

    rng = np.random.default_rng(config.seed)
    feature_min = data.contexts.min(axis=0)
    feature_max = data.contexts.max(axis=0)

    q_mean = float(data.q.mean())
    q_std = float(data.q.std())
    q_scale = q_std if q_std > 1e-12 * max(abs(q_mean), 1.0) else 1.0

    model = PredictorModel(feature_min, feature_max, [], q_mean, q_scale,
                           data.n_layers, config)
    x_all = model.features(data.contexts, data.y)
    t_all = ((data.q - q_mean) / q_scale)[:, None]

    order = rng.permutation(len(data))
    n_hold = max(1, int(round(config.holdout_fraction * len(data))))
    hold, fit = order[:n_hold], order[n_hold:]
    x_fit, t_fit = x_all[fit], t_all[fit]

    params = _init_params(rng, config.hidden)
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    steps_per_epoch = int(np.ceil(len(fit) / config.batch_size))
    total_steps = steps_per_epoch * config.epochs
    step = 0
    for epoch in range(config.epochs):
        perm = rng.permutation(len(fit))
        for start in range(0, len(fit), config.batch_size):
            idx = perm[start:start + config.batch_size]
            xb, tb = x_fit[idx], t_fit[idx]
            out, cache = _forward(params, xb)
            grads = _backward(params, cache, 2.0 * (out - tb) / len(idx))
            step += 1
            # cosine decay to 5% of the base rate
            lr = config.learning_rate * (0.05 + 0.95 * 0.5 * (1 + np.cos(np.pi * step / total_steps)))
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= beta1
                mi += (1 - beta1) * g
                vi *= beta2
                vi += (1 - beta2) * g * g
                m_hat = mi / (1 - beta1 ** step)
                v_hat = vi / (1 - beta2 ** step)
                p -= lr * m_hat / (np.sqrt(v_hat) + eps)

    model.params = params
    pred = model.predict_features(x_all[hold])
    mse = float(np.mean((pred - data.q[hold]) ** 2))
    var = float(np.var(data.q[hold]))
    rel = mse / var if var > 0 else mse
    model.report = {
        "heldout_mse": mse,
        "heldout_relative_mse": rel,
        "n_train": int(len(fit)),
        "n_heldout": int(n_hold),
    }
    logger.info("trained predictor: held-out MSE %.4g (relative %.4g)", mse, rel)
    if not rel <= config.max_relative_mse:
        raise TrainingError(
            f"held-out relative MSE {rel:.4g} exceeds threshold {config.max_relative_mse}",
            model.report,
        )
    return model


def _require_model(model):
    if model is None or not hasattr(model, "predict_table"):
        raise NotFittedError("a trained predictor is required")


def featurize(model: PredictorModel, ctx: SystemContext, y: int) -> np.ndarray:
    return model.features([ctx], [y])[0]


def predict_q(model, ctx: SystemContext, y: int) -> float:
    _require_model(model)
    return float(model.predict_table([ctx])[0, y])


def implicit_argmin(model, ctx: SystemContext) -> int:
    """Split with the smallest predicted Q (first one on ties)."""
    _require_model(model)
    return int(np.argmin(model.predict_table([ctx])[0]))


def implicit_argmin_batch(model, contexts) -> np.ndarray:
    _require_model(model)
    return np.argmin(model.predict_table(contexts), axis=1)
