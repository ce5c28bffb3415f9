"""Conformal sets over candidate split points.

The nonconformity score of a calibration point is the predicted objective at
its true optimal split. A test context's set keeps every split whose
predicted objective does not exceed the (weighted) 1 - alpha quantile of the
calibration scores, with an extra point mass at +inf.

Quantile convention: the smallest score whose cumulative mass is at least
1 - alpha; tied scores accumulate jointly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .cost_model import CONTEXT_FIELDS, SystemContext, contexts_to_array
from .errors import InvalidParameterError, InvalidWeightsError

WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class CalibrationSample:
    ctx: SystemContext
    y_opt: int


@dataclass
class CalibrationSet:
    """Array-backed D_c: contexts with their oracle-optimal split."""

    contexts: np.ndarray  # (n, 7)
    y_opt: np.ndarray  # (n,)

    def __post_init__(self):
        self.contexts = np.asarray(self.contexts, dtype=np.float64).reshape(-1, len(CONTEXT_FIELDS))
        self.y_opt = np.asarray(self.y_opt, dtype=np.int64).reshape(-1)
        if len(self.contexts) != len(self.y_opt):
            raise InvalidParameterError("contexts and y_opt must have equal length")

    def __len__(self):
        return len(self.y_opt)

    def __iter__(self):
        for row, y in zip(self.contexts, self.y_opt):
            yield CalibrationSample(SystemContext.from_array(row), int(y))

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return CalibrationSample(SystemContext.from_array(self.contexts[idx]), int(self.y_opt[idx]))
        return CalibrationSet(self.contexts[idx], self.y_opt[idx])

    @classmethod
    def from_samples(cls, samples: Sequence[CalibrationSample]) -> "CalibrationSet":
        return cls(contexts_to_array([s.ctx for s in samples]),
                   np.array([s.y_opt for s in samples], dtype=np.int64))


@dataclass(frozen=True)
class ScoredCalibration:
    """Scores sorted non-decreasing with a trailing +inf, contexts aligned."""

    scores: np.ndarray  # (n + 1,), last is +inf
    contexts: np.ndarray  # (n, 7) in score order

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 1 or scores.size == 0 or scores[-1] != np.inf:
            raise InvalidParameterError("scores must end with the +inf sentinel")
        if np.any(np.diff(scores) < 0):
            raise InvalidParameterError("scores must be sorted non-decreasing")
        if len(self.contexts) != scores.size - 1:
            raise InvalidParameterError("need one context per finite score")
        object.__setattr__(self, "scores", scores)

    @property
    def n(self) -> int:
        return self.scores.size - 1

    @property
    def finite_scores(self) -> np.ndarray:
        return self.scores[:-1]


@dataclass(frozen=True)
class PredictionInterval:
    members: tuple  # ((layer, predicted_q), ...) sorted by layer
    q_hat: float
    alpha: float

    @property
    def layers(self) -> list[int]:
        return [y for y, _ in self.members]

    @property
    def predicted_q(self) -> list[float]:
        return [q for _, q in self.members]

    def __len__(self):
        return len(self.members)

    def __contains__(self, y) -> bool:
        return any(m == y for m, _ in self.members)


def _check_alpha(alpha):
    if not (isinstance(alpha, (int, float, np.floating)) and 0.0 < alpha < 1.0):
        raise InvalidParameterError(f"alpha must lie in (0, 1), got {alpha!r}")


def nonconformity_score(model, sample: CalibrationSample) -> float:
    """Predicted objective at the calibration point's optimal split."""
    return float(model.predict_table([sample.ctx])[0, sample.y_opt])


def nonconformity_scores(model, calibration: CalibrationSet) -> np.ndarray:
    if len(calibration) == 0:
        return np.empty(0)
    table = model.predict_table(calibration.contexts)
    return table[np.arange(len(calibration)), calibration.y_opt]


def score_calibration(model, calibration) -> ScoredCalibration:
    """Score every calibration point once and rank them."""
    if not isinstance(calibration, CalibrationSet):
        calibration = CalibrationSet.from_samples(list(calibration))
    scores = nonconformity_scores(model, calibration)
    if not np.all(np.isfinite(scores)):
        raise InvalidParameterError("nonconformity scores must be finite")
    order = np.argsort(scores, kind="stable")
    return ScoredCalibration(np.append(scores[order], np.inf), calibration.contexts[order])


def vanilla_quantile(scored: ScoredCalibration, alpha: float) -> float:
    """ceil((1 - alpha)(n + 1))-th smallest score, +inf if that exceeds n."""
    _check_alpha(alpha)
    n = scored.n
    k = math.ceil(((1.0 - alpha) - _kernels.LEVEL_TOL) * (n + 1))
    k = max(k, 1)
    return float(scored.scores[k - 1]) if k <= n else math.inf


def weighted_quantile(scored: ScoredCalibration, weights, alpha: float) -> float:
    """Quantile of sum_i p_i delta(V_i) + p_{n+1} delta(+inf).

    ``weights`` has n + 1 entries aligned with ``scored.scores``.
    """
    _check_alpha(alpha)
    p = np.asarray(weights, dtype=np.float64)
    if p.shape != scored.scores.shape:
        raise InvalidWeightsError(f"expected {scored.scores.size} weights, got {p.size}")
    if np.any(p < 0) or not np.all(np.isfinite(p)) or abs(p.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise InvalidWeightsError(f"weights must be >= 0 and sum to 1 (sum={p.sum()!r})")
    cum = np.cumsum(p[:-1])
    k = int(np.searchsorted(cum, (1.0 - alpha) - _kernels.LEVEL_TOL, side="left"))
    return float(scored.scores[k]) if k < scored.n else math.inf


def weighted_quantiles(scored: ScoredCalibration, w_calib, w_test, alpha: float) -> np.ndarray:
    """Thresholds for many test points from raw (unnormalized) ratios.

    ``w_calib`` is aligned with ``scored.contexts``; ``w_test`` holds one raw
    ratio per test point. Uses the compiled batch kernel.
    """
    _check_alpha(alpha)
    w_calib = np.asarray(w_calib, dtype=np.float64)
    w_test = np.atleast_1d(np.asarray(w_test, dtype=np.float64))
    if w_calib.shape != (scored.n,):
        raise InvalidWeightsError("need one calibration weight per score")
    if np.any(w_calib < 0) or np.any(w_test < 0) or not (np.all(np.isfinite(w_calib)) and np.all(np.isfinite(w_test))):
        raise InvalidWeightsError("likelihood ratios must be finite and >= 0")
    cum = np.cumsum(w_calib)
    return _kernels.weighted_quantile_batch(cum, scored.finite_scores, w_test, 1.0 - alpha)


def interval_from_predictions(predicted: np.ndarray, q_hat: float, alpha: float) -> PredictionInterval:
    members = tuple((int(y), float(q)) for y, q in enumerate(predicted) if q <= q_hat)
    return PredictionInterval(members, float(q_hat), float(alpha))


def build_interval(model, scored: ScoredCalibration, weights, ctx_test: SystemContext,
                   alpha: float, dnn=None) -> PredictionInterval:
    """All splits whose predicted objective is within the weighted threshold.

    ``weights=None`` means uniform mass (vanilla conformal).
    """
    if weights is None:
        q_hat = vanilla_quantile(scored, alpha)
    else:
        q_hat = weighted_quantile(scored, weights, alpha)
    predicted = model.predict_table([ctx_test])[0]
    if dnn is not None and predicted.size != dnn.n_layers + 1:
        raise InvalidParameterError("model and DNN profile disagree on the number of layers")
    return interval_from_predictions(predicted, q_hat, alpha)
