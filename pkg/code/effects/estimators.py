"""
Effect-on-the-treated estimators: matched difference, odds weighting and the
marginal-odds comparison of the unmatched sample.

Every estimator works on one outcome cell at a time and drops schools whose
outcome for that cell is missing; matching itself is never redone.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from matching.results import MatchResult
from mepscore_types import CellKey, Dataset
from models.propensity import PsFit
from utils.exceptions import DataError, NumericalError
from utils.logging import get_logger

logger = get_logger(__name__)

# Sum of control odds below this is treated as zero
_ODDS_FLOOR = 1e-300


@dataclass(frozen=True)
class EffectEstimate:
    """Point estimate of the effect on the treated for one outcome cell."""

    estimator: str
    outcome_key: CellKey
    point: float
    n_treated: int
    n_control: int
    ps_kind: Optional[str] = None
    estimand: str = "ETT"

    def __post_init__(self) -> None:
        if not np.isfinite(self.point):
            raise NumericalError(f"{self.estimator} produced a non-finite estimate")
        if self.n_treated < 1:
            raise DataError(f"{self.estimator} used no treated schools")

    def as_row(self) -> dict:
        return {
            "estimator": self.estimator,
            "ps_kind": self.ps_kind or "",
            "subgroup": self.outcome_key[0],
            "assessment": self.outcome_key[1],
            "point": self.point,
            "n_treated": self.n_treated,
            "n_control": self.n_control,
        }


def _outcomes(dataset: Dataset, outcome_key: CellKey) -> np.ndarray:
    if outcome_key not in dataset.cell_keys:
        raise DataError(f"unknown outcome cell: {outcome_key[0]}_{outcome_key[1]}")
    return dataset.outcome_matrix([outcome_key])[:, 0]


def matched_difference(
    result: MatchResult, dataset: Dataset, outcome_key: CellKey, ps_kind: Optional[str] = None
) -> EffectEstimate:
    """
    Treated mean minus the odds-weighted control mean over matched sets.

    Sets lose members whose outcome is missing; control weights are then
    recomputed from the remaining members, and a set left without a treated
    or a control school is dropped.

    Raises:
        DataError: No set has both a treated and a control outcome
    """
    outcome = _outcomes(dataset, outcome_key)
    value = {sid: outcome[dataset.index_of(sid)] for s in result.sets for sid in s.members()}

    treated_total = 0.0
    control_total = 0.0
    n_treated = 0
    n_control = 0
    dropped = 0
    for matched in result.sets:
        treated_y = [value[sid] for sid in matched.treated if not np.isnan(value[sid])]
        control_y = [value[sid] for sid in matched.controls if not np.isnan(value[sid])]
        if not treated_y or not control_y:
            dropped += 1
            continue
        weight = len(treated_y) / len(control_y)
        treated_total += sum(treated_y)
        control_total += weight * sum(control_y)
        n_treated += len(treated_y)
        n_control += len(control_y)

    if n_treated == 0:
        raise DataError(
            f"no matched set has treated and control outcomes for {outcome_key[0]}_{outcome_key[1]}"
        )
    if dropped:
        logger.debug("matched_sets_dropped", outcome=outcome_key, dropped=dropped)

    # Control weights within used sets sum to the treated count
    point = treated_total / n_treated - control_total / n_treated
    return EffectEstimate("matching", outcome_key, float(point), n_treated, n_control, ps_kind=ps_kind)


def odds_weighting(
    ps: PsFit, dataset: Dataset, outcome_key: CellKey, normalized: bool = True
) -> EffectEstimate:
    """
    Treated mean minus the control mean weighted by e / (1 - e).

    The normalized form divides by the sum of the control odds; the
    unnormalized form divides by the number of treated schools.

    Raises:
        DataError: Scores outside (0, 1) or no usable outcomes
        NumericalError: Control odds are numerically zero
    """
    outcome = _outcomes(dataset, outcome_key)
    treatment = dataset.treatment_vector()
    probability = np.array([ps.score(sid) for sid in dataset.school_ids])
    if np.any((probability <= 0) | (probability >= 1)):
        raise DataError("odds weighting needs every propensity score strictly inside (0, 1)")

    present = ~np.isnan(outcome)
    treated = present & (treatment == 1)
    controls = present & (treatment == 0)
    if not treated.any() or not controls.any():
        raise DataError("odds weighting needs treated and control outcomes")

    odds = probability[controls] / (1.0 - probability[controls])
    odds_total = float(np.sum(odds))
    if odds_total < _ODDS_FLOOR:
        raise NumericalError("control odds are numerically zero")

    treated_mean = float(np.mean(outcome[treated]))
    weighted = float(np.sum(odds * outcome[controls]))
    n_treated = int(treated.sum())
    control_term = weighted / odds_total if normalized else weighted / n_treated

    return EffectEstimate(
        "weighting" if normalized else "weighting_unnormalized",
        outcome_key,
        treated_mean - control_term,
        n_treated,
        int(controls.sum()),
        ps_kind=ps.kind,
    )


def marginal_odds_difference(dataset: Dataset, outcome_key: CellKey) -> EffectEstimate:
    """
    Unmatched comparison with controls weighted by the marginal odds of treatment.

    The marginal odds are the same for every control, so the estimate is
    the plain difference in group means.
    """
    outcome = _outcomes(dataset, outcome_key)
    treatment = dataset.treatment_vector()
    present = ~np.isnan(outcome)
    treated = present & (treatment == 1)
    controls = present & (treatment == 0)
    if not treated.any() or not controls.any():
        raise DataError("marginal odds comparison needs treated and control outcomes")
    point = float(np.mean(outcome[treated]) - np.mean(outcome[controls]))
    return EffectEstimate("marginal_odds", outcome_key, point, int(treated.sum()), int(controls.sum()))
