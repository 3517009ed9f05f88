"""
Marginal treatment probability under normally distributed score error.

When assignment is logistic in the obtained scores and the obtained scores
are normal around the true scores, the probability of treatment given the
true scores is a logistic-normal integral. It is evaluated in production by
a three-component normal-CDF mixture; adaptive quadrature of the integral is
kept only as a reference for testing the mixture.
"""

import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy import integrate
from scipy.stats import norm

from utils.exceptions import DataError
from utils.logging import get_logger

logger = get_logger(__name__)

ArrayLike = Union[float, np.ndarray]

# Measured mixture-vs-quadrature bound, frozen for regression checks
FROZEN_APPROXIMATION_TOLERANCE = 2e-3

ORACLE_ABS_TOLERANCE = 1e-9


@dataclass(frozen=True)
class MixtureConstants:
    """Mixing probabilities ``p`` and scaling constants ``s``."""

    p: Tuple[float, float, float]
    s: Tuple[float, float, float]

    def __post_init__(self) -> None:
        if any(not v > 0 for v in self.p + self.s):
            raise DataError("mixture constants must be positive")
        if abs(math.fsum(self.p) - 1.0) > 1e-15:
            raise DataError("mixing probabilities must sum to one")


LOGISTIC_MIXTURE = MixtureConstants(
    p=(0.252201578098282, 0.585225059235736, 0.162573362665982),
    s=(0.907930837449693, 0.577787276140136, 0.36403772947977),
)


def mixture_probability(
    eta: ArrayLike, variance: ArrayLike, constants: MixtureConstants = LOGISTIC_MIXTURE
) -> ArrayLike:
    """
    Sum_t p_t * Phi(s_t * eta / sqrt(1 + s_t^2 * variance)).

    ``variance`` is the variance of the linear predictor induced by the
    score error; zero reproduces (approximately) the plain inverse logit.
    """
    eta = np.asarray(eta, dtype=float)
    variance = np.asarray(variance, dtype=float)
    if np.any(variance < 0):
        raise DataError("linear-predictor variance must be nonnegative")

    total = np.zeros(np.broadcast(eta, variance).shape)
    for p_t, s_t in zip(constants.p, constants.s):
        total = total + p_t * norm.cdf(s_t * eta / np.sqrt(1.0 + s_t**2 * variance))
    if total.ndim == 0:
        return float(total)
    return total


def _expit(u: float) -> float:
    if u >= 0:
        return 1.0 / (1.0 + math.exp(-u))
    e = math.exp(u)
    return e / (1.0 + e)


_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def logistic_normal_oracle(eta: float, variance: float) -> float:
    """
    E[expit(U)] for U ~ N(eta, variance) by adaptive quadrature.

    Integrates over the standardized variable on [-40, 40], splitting at the
    point where the logistic factor changes fastest.
    """
    if variance < 0:
        raise DataError("variance must be nonnegative")
    if variance == 0:
        return _expit(eta)

    sd = math.sqrt(variance)

    def integrand(z: float) -> float:
        return _expit(eta + sd * z) * math.exp(-0.5 * z * z) * _INV_SQRT_2PI

    breaks = sorted({-40.0, min(max(-eta / sd, -40.0), 40.0), 40.0})
    total = 0.0
    for lo, hi in zip(breaks, breaks[1:]):
        if hi > lo:
            value, _ = integrate.quad(
                integrand, lo, hi, epsabs=ORACLE_ABS_TOLERANCE / 10, epsrel=1e-12, limit=200
            )
            total += value
    return total


@dataclass(frozen=True)
class ApproximationGrid:
    """Mixture and quadrature values over an (eta, variance) grid."""

    eta: np.ndarray
    variance: np.ndarray
    mixture: np.ndarray
    oracle: np.ndarray

    @property
    def abs_error(self) -> np.ndarray:
        return np.abs(self.mixture - self.oracle)

    @property
    def max_error(self) -> float:
        return float(np.max(self.abs_error))

    @property
    def worst_point(self) -> Tuple[float, float]:
        k = int(np.argmax(self.abs_error))
        return float(self.eta[k]), float(self.variance[k])

    def within(self, tolerance: float = FROZEN_APPROXIMATION_TOLERANCE) -> bool:
        return self.max_error <= tolerance


def approximation_grid(
    eta_step: float = 0.05,
    v_step: float = 0.25,
    eta_max: float = 8.0,
    v_max: float = 25.0,
    constants: MixtureConstants = LOGISTIC_MIXTURE,
) -> ApproximationGrid:
    """
    Compare the mixture against quadrature on eta in [-eta_max, eta_max] x v in [0, v_max].

    Both functions satisfy f(-eta, v) = 1 - f(eta, v), so quadrature runs only
    for eta >= 0 and the negative half is filled in by reflection.
    """
    n_eta = int(round(eta_max / eta_step))
    n_v = int(round(v_max / v_step))
    half = np.arange(0, n_eta + 1) * eta_step
    variances = np.arange(0, n_v + 1) * v_step

    oracle_half = np.empty((half.size, variances.size))
    for i, e in enumerate(half):
        for j, v in enumerate(variances):
            oracle_half[i, j] = logistic_normal_oracle(float(e), float(v))

    etas = np.concatenate([-half[:0:-1], half])
    oracle = np.vstack([1.0 - oracle_half[:0:-1], oracle_half])

    eta_grid, v_grid = np.meshgrid(etas, variances, indexing="ij")
    mixture = mixture_probability(eta_grid, v_grid, constants)

    grid = ApproximationGrid(
        eta=eta_grid.ravel(),
        variance=v_grid.ravel(),
        mixture=np.asarray(mixture).ravel(),
        oracle=oracle.ravel(),
    )
    logger.info("approximation_grid_evaluated", points=grid.eta.size, max_error=grid.max_error)
    return grid
