"""End-to-end decision pipeline: predictor + calibration + weighting + strategy."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .conformal import CalibrationSet, PredictionInterval, ScoredCalibration, interval_from_predictions, \
    score_calibration, vanilla_quantile, weighted_quantiles
from .cost_model import CostModel, SystemContext, contexts_to_array
from .decision import (BASELINE_STRATEGIES, INTERVAL_STRATEGIES, NeurosurgeonModel, choose_adaptive,
                       choose_mean, choose_random)
from .errors import EmptyIntervalError, InvalidParameterError
from .shift import log_likelihood_ratio

logger = logging.getLogger(__name__)

ALL_STRATEGIES = INTERVAL_STRATEGIES + BASELINE_STRATEGIES + ("oracle", "implicit")


@dataclass
class Decisions:
    """Outcome of running one strategy over a batch of contexts."""

    chosen: np.ndarray
    interval_sizes: np.ndarray
    q_hat: np.ndarray
    fallback: np.ndarray
    covered: np.ndarray | None = None


@dataclass
class Pipeline:
    """Everything needed to turn a context into a split decision.

    With both densities set, thresholds use likelihood-ratio weights;
    otherwise they fall back to the unweighted quantile.
    """

    cost_model: CostModel
    model: object
    scored: ScoredCalibration
    alpha: float = 0.1
    calib_density: object = None
    test_density: object = None
    neurosurgeon: NeurosurgeonModel | None = None
    _log_w_calib: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def build(cls, cost_model, model, calibration: CalibrationSet, alpha=0.1, calib_density=None,
              test_density=None, neurosurgeon=None) -> "Pipeline":
        return cls(cost_model, model, score_calibration(model, calibration), alpha,
                   calib_density, test_density, neurosurgeon)

    @property
    def weighted(self) -> bool:
        return self.calib_density is not None and self.test_density is not None

    def with_test_density(self, test_density) -> "Pipeline":
        return Pipeline(self.cost_model, self.model, self.scored, self.alpha, self.calib_density,
                        test_density, self.neurosurgeon)

    def with_alpha(self, alpha) -> "Pipeline":
        return Pipeline(self.cost_model, self.model, self.scored, alpha, self.calib_density,
                        self.test_density, self.neurosurgeon, self._log_w_calib)

    def thresholds(self, contexts) -> np.ndarray:
        ctx = contexts_to_array(contexts)
        if not self.weighted:
            return np.full(ctx.shape[0], vanilla_quantile(self.scored, self.alpha))
        if self._log_w_calib is None:
            self._log_w_calib = log_likelihood_ratio(self.test_density, self.calib_density, self.scored.contexts)
        log_w_test = log_likelihood_ratio(self.test_density, self.calib_density, ctx)
        top = max(self._log_w_calib.max(initial=-np.inf), log_w_test.max(initial=-np.inf))
        w_calib = np.exp(self._log_w_calib - top)
        w_test = np.exp(log_w_test - top)
        return weighted_quantiles(self.scored, w_calib, w_test, self.alpha)

    def intervals(self, contexts) -> list[PredictionInterval]:
        ctx = contexts_to_array(contexts)
        q_hat = self.thresholds(ctx)
        table = self.model.predict_table(ctx)
        return [interval_from_predictions(row, qh, self.alpha) for row, qh in zip(table, q_hat)]

    def interval(self, ctx: SystemContext) -> PredictionInterval:
        return self.intervals([ctx])[0]

    def decide(self, strategy: str, contexts, rng: np.random.Generator | None = None,
               y_opt: np.ndarray | None = None) -> Decisions:
        """Apply ``strategy`` to every context.

        Interval strategies fall back to the predictor argmin on an empty set.
        ``oracle`` needs ``y_opt`` or evaluates the cost model itself.
        """
        if strategy not in ALL_STRATEGIES:
            raise InvalidParameterError(f"unknown strategy {strategy!r}; choose from {ALL_STRATEGIES}")
        ctx = contexts_to_array(contexts)
        m = ctx.shape[0]
        predicted = self.model.predict_table(ctx) if m else np.empty((0, self.cost_model.n_layers + 1))
        q_hat = self.thresholds(ctx) if m else np.empty(0)
        sizes = np.sum(predicted <= q_hat[:, None], axis=1)
        fallback = np.zeros(m, dtype=bool)
        chosen = np.empty(m, dtype=np.int64)
        n = self.cost_model.n_layers

        if strategy in INTERVAL_STRATEGIES:
            if strategy == "random" and rng is None:
                rng = np.random.default_rng(0)
            for i in range(m):
                interval = interval_from_predictions(predicted[i], q_hat[i], self.alpha)
                try:
                    if strategy == "random":
                        chosen[i] = choose_random(interval, rng)
                    elif strategy == "mean":
                        chosen[i] = choose_mean(interval)
                    else:
                        chosen[i] = choose_adaptive(interval)
                except EmptyIntervalError:
                    chosen[i] = int(np.argmin(predicted[i]))
                    fallback[i] = True
            if fallback.any():
                logger.info("%s: %d empty intervals fell back to the predictor argmin", strategy, fallback.sum())
        elif strategy == "edge-only":
            chosen[:] = n
        elif strategy == "cloud-only":
            chosen[:] = 0
        elif strategy == "neurosurgeon":
            if self.neurosurgeon is None:
                raise InvalidParameterError("the neurosurgeon strategy needs fitted regressions")
            for i in range(m):
                chosen[i] = self.neurosurgeon.choose(ctx[i, _kernels.BW], ctx[i, _kernels.SRV_UTIL])
        elif strategy == "implicit":
            chosen[:] = np.argmin(predicted, axis=1) if m else chosen
        else:  # oracle
            chosen[:] = y_opt if y_opt is not None else self.cost_model.optimal(ctx)

        covered = None
        if y_opt is not None and m:
            covered = predicted[np.arange(m), y_opt] <= q_hat
        return Decisions(chosen, sizes, q_hat, fallback, covered)


def evaluate(pipeline: Pipeline, test: CalibrationSet, strategies, seed: int = 0) -> dict:
    """Error rate, coverage, interval size and regret vs the oracle per strategy."""
    ctx = test.contexts
    m = len(test)
    table = pipeline.cost_model.table(ctx)
    rows = np.arange(m)
    y_opt = test.y_opt
    metrics = {"n_test": int(m), "alpha": float(pipeline.alpha), "weighted": bool(pipeline.weighted)}
    per_strategy = {}
    coverage = None
    for k, name in enumerate(strategies):
        rng = np.random.default_rng([seed, k])
        dec = pipeline.decide(name, ctx, rng=rng, y_opt=y_opt)
        if coverage is None and dec.covered is not None:
            coverage = float(np.mean(dec.covered))
            metrics["coverage"] = coverage
            metrics["mean_interval_size"] = float(np.mean(dec.interval_sizes))
            metrics["empty_interval_rate"] = float(np.mean(dec.interval_sizes == 0))
        y = dec.chosen
        entry = {"error_rate": float(np.mean(y != y_opt)) if m else 0.0,
                 "fallback_count": int(dec.fallback.sum())}
        for label, comp in (("q", _kernels.Q), ("carbon", _kernels.CARBON),
                            ("latency", _kernels.T_TOTAL), ("edge_energy", _kernels.E_EDGE)):
            chosen_vals = table[comp][rows, y]
            opt_vals = table[comp][rows, y_opt]
            entry[f"mean_{label}"] = float(np.mean(chosen_vals)) if m else 0.0
            entry[f"mean_{label}_regret"] = float(np.mean(chosen_vals - opt_vals)) if m else 0.0
        per_strategy[name] = entry
    metrics["strategies"] = per_strategy
    return metrics
