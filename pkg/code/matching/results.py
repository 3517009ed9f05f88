"""
Match settings and results.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Sequence, Tuple

import numpy as np

from utils.exceptions import DataError

# Logit distances are scaled to integers for the flow solver
DISTANCE_SCALE = 1_000_000
CALIPER_SLACK = 1e-12


def distance_units(a: float, b: float) -> int:
    """Integer cost of pairing two logits."""
    return int(round(abs(a - b) * DISTANCE_SCALE))


def within_caliper(a: float, b: float, caliper: float) -> bool:
    return abs(a - b) <= caliper + CALIPER_SLACK


@dataclass(frozen=True)
class MatchSpec:
    """Caliper and ratio bounds for full matching on propensity-score logits."""

    caliper_logits: float
    max_controls_per_treated: int = 5
    max_treated_per_control: int = 10

    def __post_init__(self) -> None:
        if not self.caliper_logits > 0:
            raise DataError(f"caliper must be positive, got {self.caliper_logits}")
        if self.max_controls_per_treated < 1 or self.max_treated_per_control < 1:
            raise DataError("ratio bounds must be at least 1")


@dataclass(frozen=True)
class MatchedSet:
    """One treated with several controls, or one control with several treated."""

    set_id: int
    treated: Tuple[str, ...]
    controls: Tuple[str, ...]
    distance: float

    @property
    def control_weight(self) -> float:
        return len(self.treated) / len(self.controls)

    def members(self) -> Tuple[str, ...]:
        return self.treated + self.controls


@dataclass(frozen=True)
class MatchResult:
    """Matched sets, unmatched units and the achieved objective."""

    sets: Tuple[MatchedSet, ...]
    unmatched_treated: Tuple[str, ...]
    unmatched_controls: Tuple[str, ...] = ()
    total_distance: float = 0.0
    total_cost_units: int = 0
    feasible: bool = True
    spec: MatchSpec = field(default_factory=lambda: MatchSpec(1.0))

    @property
    def weights(self) -> Dict[str, float]:
        """Treated weight 1; each control weighted by its set's treated/control ratio."""
        out: Dict[str, float] = {}
        for matched in self.sets:
            for sid in matched.treated:
                out[sid] = 1.0
            for sid in matched.controls:
                out[sid] = matched.control_weight
        return out

    @property
    def matched_treated(self) -> Tuple[str, ...]:
        return tuple(sid for s in self.sets for sid in s.treated)

    @property
    def matched_controls(self) -> Tuple[str, ...]:
        return tuple(sid for s in self.sets for sid in s.controls)

    def set_of(self) -> Dict[str, int]:
        return {sid: s.set_id for s in self.sets for sid in s.members()}

    def unmatched_fraction(self, n_treated: int) -> float:
        """Share of all treated schools left without a match."""
        if n_treated <= 0:
            return 0.0
        return len(self.unmatched_treated) / n_treated


def effective_sample_size(result: MatchResult) -> float:
    """Matched treated count plus the Kish effective size of the control weights."""
    if not result.sets:
        return 0.0
    control_weights = np.array(
        [s.control_weight for s in result.sets for _ in s.controls], dtype=float
    )
    n_treated = sum(len(s.treated) for s in result.sets)
    return float(n_treated + control_weights.sum() ** 2 / np.sum(control_weights**2))


def match_weights(result: MatchResult, school_ids: Sequence[str]) -> np.ndarray:
    """Per-school weights in ``school_ids`` order; 0 for unmatched schools."""
    weights = result.weights
    return np.array([weights.get(sid, 0.0) for sid in school_ids], dtype=float)


def empty_result(
    spec: MatchSpec,
    unmatched_treated: Iterable[str],
    unmatched_controls: Iterable[str] = (),
    feasible: bool = True,
) -> MatchResult:
    return MatchResult(
        sets=(),
        unmatched_treated=tuple(unmatched_treated),
        unmatched_controls=tuple(unmatched_controls),
        feasible=feasible,
        spec=spec,
    )


def summarize_match(result: MatchResult, n_treated: int) -> Mapping[str, object]:
    """Headline numbers for logs and match_summary.csv."""
    return {
        "matched_treated": len(result.matched_treated),
        "unmatched_treated": len(result.unmatched_treated),
        "unmatched_pct": 100.0 * result.unmatched_fraction(n_treated),
        "matched_controls": len(result.matched_controls),
        "sets": len(result.sets),
        "effective_sample_size": effective_sample_size(result),
        "total_distance": result.total_distance,
        "feasible": result.feasible,
    }
