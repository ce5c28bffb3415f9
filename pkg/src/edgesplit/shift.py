"""Covariate densities and likelihood-ratio weights for weighted conformal sets.

Calibration contexts are modelled as uniform over a box, test contexts as a
diagonal Gaussian centred on a single measurement. Densities are evaluated
in log space; the ratio is exponentiated only at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cost_model import CONTEXT_FIELDS, SystemContext, contexts_to_array
from .errors import InvalidParameterError, InvalidWeightsError, OutOfSupportError

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class UniformBoxDensity:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=np.float64)
        upper = np.asarray(self.upper, dtype=np.float64)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise InvalidParameterError("lower and upper must be 1-d arrays of equal length")
        if not np.all(lower < upper):
            bad = [CONTEXT_FIELDS[i] if i < len(CONTEXT_FIELDS) else str(i)
                   for i in np.flatnonzero(~(lower < upper))]
            raise InvalidParameterError(f"degenerate box dimension(s): {', '.join(bad)}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def ranges(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.all((x >= self.lower) & (x <= self.upper), axis=1)

    def log_pdf(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        inside = self.contains(x)
        return np.where(inside, -np.sum(np.log(self.ranges)), -np.inf)


@dataclass(frozen=True)
class GaussianDensity:
    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        var = np.asarray(self.variance, dtype=np.float64)
        if mean.shape != var.shape:
            raise InvalidParameterError("mean and variance must have equal shape")
        if not np.all(var > 0):
            raise InvalidParameterError("variances must be > 0")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def log_pdf(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        z2 = (x - self.mean) ** 2 / self.variance
        return -0.5 * (np.sum(z2, axis=1) + np.sum(np.log(self.variance)) + len(self.mean) * _LOG_2PI)


def fit_uniform(contexts, margin: float = 0.01) -> UniformBoxDensity:
    """Observed per-dimension min/max, widened by ``margin`` of the range."""
    if hasattr(contexts, "contexts"):
        contexts = contexts.contexts
    x = contexts_to_array(contexts)
    if x.shape[0] < 2:
        raise InvalidParameterError("need at least two calibration points to fit a box")
    lo, hi = x.min(axis=0), x.max(axis=0)
    span = hi - lo
    if np.any(span <= 0):
        bad = [CONTEXT_FIELDS[i] for i in np.flatnonzero(span <= 0)]
        raise InvalidParameterError(f"calibration contexts are constant in: {', '.join(bad)}")
    return UniformBoxDensity(lo - margin * span, hi + margin * span)


def fit_gaussian(measurement: SystemContext, rel_std: float, box: UniformBoxDensity) -> GaussianDensity:
    """Diagonal Gaussian at a single measurement, std = rel_std x box range."""
    if not rel_std > 0:
        raise InvalidParameterError(f"rel_std must be > 0, got {rel_std}")
    mean = measurement.as_array() if isinstance(measurement, SystemContext) else np.asarray(measurement, float)
    std = rel_std * box.ranges
    return GaussianDensity(mean, std ** 2)


def log_likelihood_ratio(test_density, calib_density, x) -> np.ndarray:
    x = contexts_to_array(x) if not isinstance(x, np.ndarray) else np.atleast_2d(x)
    log_calib = calib_density.log_pdf(x)
    if np.any(~np.isfinite(log_calib)):
        bad = int(np.flatnonzero(~np.isfinite(log_calib))[0])
        raise OutOfSupportError(f"point {bad} lies outside the calibration support; the ratio is undefined")
    return test_density.log_pdf(x) - log_calib


def likelihood_ratio(test_density, calib_density, x) -> float | np.ndarray:
    """w(x) = test density / calibration density.

    Accepts one SystemContext (returns a float) or an (M, 7) array.
    """
    if isinstance(x, SystemContext):
        return float(np.exp(log_likelihood_ratio(test_density, calib_density, x.as_array()[None, :])[0]))
    return np.exp(log_likelihood_ratio(test_density, calib_density, x))


def normalized_weights(w_calib, w_test) -> np.ndarray:
    """Point masses for the calibration scores followed by the sentinel's mass."""
    w = np.append(np.asarray(w_calib, dtype=np.float64), float(w_test))
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InvalidWeightsError("likelihood ratios must be finite and >= 0")
    total = w.sum()
    if not total > 0:
        raise InvalidWeightsError("at least one likelihood ratio must be positive")
    return w / total


def normalized_weights_from_log(log_w_calib, log_w_test) -> np.ndarray:
    """Same as :func:`normalized_weights` but from log ratios (max-shifted)."""
    log_w = np.append(np.asarray(log_w_calib, dtype=np.float64), float(log_w_test))
    if np.any(np.isnan(log_w)) or np.any(log_w == np.inf):
        raise InvalidWeightsError("log likelihood ratios must be < +inf and not NaN")
    top = log_w.max()
    if top == -np.inf:
        raise InvalidWeightsError("at least one likelihood ratio must be positive")
    w = np.exp(log_w - top)
    return w / w.sum()
