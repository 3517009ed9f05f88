"""
Penalized spline of propensity prediction.

A regression of the outcome on the PS logit is fitted to controls only,
using a truncated-linear basis [1, x, (x - k_1)_+, ..., (x - k_K)_+] with a
ridge penalty on the spline coefficients. The penalty is chosen by
generalized cross-validation unless given. Each treated school's
counterfactual is the fitted curve at its own logit.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from effects.estimators import EffectEstimate
from mepscore_types import CellKey, Dataset
from models.propensity import PsFit
from utils.exceptions import DataError, NumericalError
from utils.logging import get_logger

logger = get_logger(__name__)

MIN_CONTROLS = 10
DEFAULT_MAX_KNOTS = 20
# Penalty grid, relative to the average spline-column energy
_LOG10_PENALTY_GRID = np.linspace(-8.0, 6.0, 57)


@dataclass(frozen=True)
class SplineFit:
    knots: Tuple[float, ...]
    coefficients: Tuple[float, ...]
    penalty: float
    gcv: float
    effective_df: float

    def predict(self, x: np.ndarray) -> np.ndarray:
        return truncated_basis(np.asarray(x, dtype=float), np.asarray(self.knots)) @ np.asarray(
            self.coefficients
        )


def choose_knots(control_logits: np.ndarray, max_knots: int = DEFAULT_MAX_KNOTS) -> np.ndarray:
    """min(max_knots, n // 4) equally spaced quantiles of the control logits, deduplicated."""
    n = control_logits.size
    wanted = min(max_knots, n // 4)
    if wanted <= 0:
        return np.zeros(0)
    levels = np.arange(1, wanted + 1) / (wanted + 1)
    knots = np.unique(np.quantile(control_logits, levels))
    # A knot at or beyond the largest logit adds an all-zero column
    knots = knots[knots < control_logits.max()]
    if knots.size < wanted:
        logger.warning("pencomp_knots_reduced", requested=wanted, used=int(knots.size))
    return knots


def truncated_basis(x: np.ndarray, knots: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    columns = [np.ones_like(x), x]
    columns.extend(np.maximum(x - k, 0.0) for k in knots)
    return np.column_stack(columns)


def _ridge(basis: np.ndarray, y: np.ndarray, penalty: float) -> Tuple[np.ndarray, float, float]:
    """Coefficients, residual sum of squares and hat-matrix trace at one penalty."""
    gram = basis.T @ basis
    weights = np.ones(basis.shape[1])
    weights[:2] = 0.0
    system = gram + penalty * np.diag(weights)
    inverse = np.linalg.pinv(system)
    coefficients = inverse @ (basis.T @ y)
    resid = y - basis @ coefficients
    return coefficients, float(resid @ resid), float(np.trace(inverse @ gram))


def fit_penalized_spline(
    x: np.ndarray,
    y: np.ndarray,
    max_knots: int = DEFAULT_MAX_KNOTS,
    penalty: Optional[float] = None,
) -> SplineFit:
    """Fit the truncated-linear ridge spline, choosing the penalty by GCV when not given."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    knots = choose_knots(x, max_knots)
    basis = truncated_basis(x, knots)
    n = x.size
    if n < basis.shape[1] + 2 and knots.size:
        raise DataError(f"{n} controls are too few for {knots.size} knots")

    if penalty is not None:
        if penalty < 0:
            raise DataError("penalty must be nonnegative")
        coefficients, rss, df = _ridge(basis, y, penalty)
        gcv = n * rss / (n - df) ** 2 if n > df else float("inf")
        return SplineFit(tuple(knots), tuple(coefficients), float(penalty), gcv, df)

    spline_energy = float(np.mean(np.sum(basis[:, 2:] ** 2, axis=0))) if knots.size else 1.0
    scale = spline_energy if spline_energy > 0 else 1.0

    best: Optional[SplineFit] = None
    for exponent in _LOG10_PENALTY_GRID:
        lam = scale * 10.0**exponent
        coefficients, rss, df = _ridge(basis, y, lam)
        if n - df <= 1e-9:
            continue
        gcv = n * rss / (n - df) ** 2
        if best is None or gcv < best.gcv:
            best = SplineFit(tuple(knots), tuple(coefficients), lam, gcv, df)
    if best is None:
        raise NumericalError("no penalty on the grid leaves residual degrees of freedom")
    return best


def pencomp(
    ps: PsFit,
    dataset: Dataset,
    outcome_key: CellKey,
    max_knots: int = DEFAULT_MAX_KNOTS,
    penalty: Optional[float] = None,
) -> EffectEstimate:
    """
    Mean over treated schools of observed minus spline-predicted outcome.

    Raises:
        DataError: Fewer than ten controls with outcomes, or no treated outcomes
    """
    if outcome_key not in dataset.cell_keys:
        raise DataError(f"unknown outcome cell: {outcome_key[0]}_{outcome_key[1]}")
    outcome = dataset.outcome_matrix([outcome_key])[:, 0]
    treatment = dataset.treatment_vector()
    logits = np.array([ps.logit_of(sid) for sid in dataset.school_ids])
    if not np.all(np.isfinite(logits)):
        raise DataError("PENCOMP needs finite propensity logits")

    present = ~np.isnan(outcome)
    controls = present & (treatment == 0)
    treated = present & (treatment == 1)
    if int(controls.sum()) < MIN_CONTROLS:
        raise DataError(f"PENCOMP needs at least {MIN_CONTROLS} controls with outcomes, found {int(controls.sum())}")
    if not treated.any():
        raise DataError("PENCOMP needs treated outcomes")

    spline = fit_penalized_spline(logits[controls], outcome[controls], max_knots, penalty)
    counterfactual = spline.predict(logits[treated])
    point = float(np.mean(outcome[treated] - counterfactual))
    logger.debug(
        "pencomp_fitted",
        ps_kind=ps.kind,
        knots=len(spline.knots),
        penalty=spline.penalty,
        effective_df=round(spline.effective_df, 3),
    )
    return EffectEstimate(
        "pencomp", outcome_key, point, int(treated.sum()), int(controls.sum()), ps_kind=ps.kind
    )
