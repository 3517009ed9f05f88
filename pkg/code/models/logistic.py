"""
Logistic regression by iteratively reweighted least squares.

Columns other than the intercept are standardized before fitting and the
coefficients mapped back afterwards, which keeps the Newton system well
conditioned for score-scale regressors (hundreds to thousands of points).
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.special import expit, log_expit

from utils.exceptions import DataError
from utils.logging import get_logger

logger = get_logger(__name__)

GRADIENT_TOLERANCE = 1e-8
MAX_ITERATIONS = 100
SEPARATION_EPSILON = 1e-6
# |eta| cap keeps every probability strictly inside (0, 1) in double precision
ETA_LIMIT = 35.0


@dataclass(frozen=True)
class LogisticFit:
    """Coefficients on the original column scale plus fit diagnostics."""

    coefficients: Tuple[float, ...]
    deviance: float
    iterations: int
    converged: bool
    separation: bool
    dropped_columns: Tuple[int, ...] = ()
    column_names: Tuple[str, ...] = ()

    def linear_predictor(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ np.asarray(self.coefficients)

    def probability(self, x: np.ndarray) -> np.ndarray:
        return expit(np.clip(self.linear_predictor(x), -ETA_LIMIT, ETA_LIMIT))


def _deviance(t: np.ndarray, eta: np.ndarray) -> float:
    return float(-2.0 * np.sum(t * log_expit(eta) + (1.0 - t) * log_expit(-eta)))


def fit_logistic(
    x: np.ndarray, t: np.ndarray, column_names: Optional[Sequence[str]] = None
) -> LogisticFit:
    """
    Maximum likelihood logistic regression of ``t`` on ``x``.

    Args:
        x: Design matrix whose first column is the intercept
        t: Binary response
        column_names: Optional labels used in log messages

    Returns:
        LogisticFit; non-intercept columns that are constant are dropped and
        given coefficient 0.

    Raises:
        DataError: Response is not binary or has a single class
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if x.ndim != 2 or x.shape[0] != t.shape[0]:
        raise DataError(f"design matrix shape {x.shape} does not match response length {t.shape[0]}")
    if not np.all((t == 0) | (t == 1)):
        raise DataError("treatment must be coded 0/1")
    n_treated = int(t.sum())
    if n_treated == 0 or n_treated == t.size:
        raise DataError("logistic fit needs both treated and control units")

    names = tuple(column_names) if column_names is not None else tuple(f"x{k}" for k in range(x.shape[1]))

    spread = np.ptp(x, axis=0)
    dropped = tuple(k for k in range(1, x.shape[1]) if spread[k] == 0)
    if dropped:
        logger.warning("logistic_constant_columns_dropped", columns=[names[k] for k in dropped])
    kept = [0] + [k for k in range(1, x.shape[1]) if k not in dropped]

    center = x[:, kept[1:]].mean(axis=0)
    scale = x[:, kept[1:]].std(axis=0)
    xs = np.column_stack([np.ones(x.shape[0]), (x[:, kept[1:]] - center) / scale])

    beta = np.zeros(xs.shape[1])
    beta[0] = np.log(n_treated / (t.size - n_treated))
    eta = np.clip(xs @ beta, -ETA_LIMIT, ETA_LIMIT)
    deviance = _deviance(t, eta)

    converged = False
    iterations = 0
    for iterations in range(1, MAX_ITERATIONS + 1):
        p = expit(eta)
        gradient = xs.T @ (t - p)
        if np.linalg.norm(gradient) <= GRADIENT_TOLERANCE:
            converged = True
            iterations -= 1
            break

        weight = p * (1.0 - p)
        hessian = (xs * weight[:, None]).T @ xs
        try:
            step = scipy.linalg.solve(hessian, gradient, assume_a="pos")
        except (np.linalg.LinAlgError, ValueError):
            step = scipy.linalg.lstsq(hessian, gradient)[0]

        # Step halving keeps the deviance monotone
        for _ in range(30):
            candidate = beta + step
            candidate_eta = np.clip(xs @ candidate, -ETA_LIMIT, ETA_LIMIT)
            candidate_deviance = _deviance(t, candidate_eta)
            if candidate_deviance <= deviance + 1e-12 * max(1.0, deviance):
                break
            step = step / 2.0
        beta, eta, deviance = candidate, candidate_eta, candidate_deviance

    p = expit(eta)
    # Fitted probabilities pinned at 0/1, or a linear predictor that splits the classes
    splits = bool(eta[t == 1].min() > eta[t == 0].max() or eta[t == 1].max() < eta[t == 0].min())
    separation = splits or bool(np.any((p < SEPARATION_EPSILON) | (p > 1.0 - SEPARATION_EPSILON)))

    coefficients = np.zeros(x.shape[1])
    slopes = beta[1:] / scale
    coefficients[kept[1:]] = slopes
    coefficients[0] = beta[0] - float(np.sum(slopes * center))

    if separation:
        logger.warning("logistic_quasi_separation", iterations=iterations, converged=converged)
    elif not converged:
        logger.warning("logistic_not_converged", iterations=iterations)

    return LogisticFit(
        coefficients=tuple(float(c) for c in coefficients),
        deviance=deviance,
        iterations=iterations,
        converged=converged,
        separation=separation,
        dropped_columns=dropped,
        column_names=names,
    )
