"""
Effect-size calibration by Monte Carlo root finding.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from utils.exceptions import NumericalError
from utils.logging import get_logger

from .population import SeedLike, _rng, draw_assignment_inputs, effect_function
from .settings import SimConfig

logger = get_logger(__name__)

ETT_TOLERANCE = 0.05
MAX_BRACKET_DOUBLINGS = 60


@dataclass(frozen=True)
class Calibration:
    amplitude: float
    treated_cells: int
    achieved_ett: float


def treated_true_scores(config: SimConfig, seed: SeedLike, min_cells: int) -> np.ndarray:
    """True scores of treated cells, pooled over populations until ``min_cells`` are collected."""
    rng = _rng(seed)
    pooled = []
    total = 0
    while total < min_cells:
        _, x, _, _, _, treatment = draw_assignment_inputs(config, rng)
        cells = x[treatment == 1].ravel()
        pooled.append(cells)
        total += cells.size
    return np.concatenate(pooled)


def monte_carlo_ett(
    config: SimConfig,
    amplitude: float,
    seed: SeedLike = None,
    min_cells: Optional[int] = None,
) -> float:
    """Mean effect over simulated treated cells at the given amplitude."""
    cells = treated_true_scores(config, seed, min_cells or config.calibration_cells)
    return float(np.mean(effect_function(config, cells, amplitude)))


def calibrate_effect(config: SimConfig, seed: SeedLike = None) -> Calibration:
    """
    Find the effect amplitude whose ETT over simulated treated cells is the target.

    The same pooled cells are used for every trial amplitude, so the root is
    found on a fixed Monte Carlo sample.

    Raises:
        NumericalError: The root could not be bracketed, or the achieved ETT
            misses the target by more than the tolerance
    """
    cells = treated_true_scores(config, seed, config.calibration_cells)
    target = config.target_ett

    def gap(amplitude: float) -> float:
        return float(np.mean(effect_function(config, cells, amplitude))) - target

    lower, upper = 0.0, 1.0
    for _ in range(MAX_BRACKET_DOUBLINGS):
        if np.sign(gap(lower)) != np.sign(gap(upper)):
            break
        upper *= 2.0
    else:
        raise NumericalError(
            f"could not bracket the effect amplitude: ETT gap {gap(lower):.4g} at 0, "
            f"{gap(upper):.4g} at {upper:.4g} (target {target})"
        )

    amplitude = float(brentq(gap, lower, upper, xtol=1e-12))
    achieved = gap(amplitude) + target
    if abs(achieved - target) > ETT_TOLERANCE:
        raise NumericalError(f"calibrated ETT {achieved:.4f} misses target {target}")
    logger.info(
        "effect_calibrated",
        amplitude=round(amplitude, 6),
        treated_cells=int(cells.size),
        achieved_ett=round(achieved, 6),
    )
    return Calibration(amplitude, int(cells.size), achieved)
