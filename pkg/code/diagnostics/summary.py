"""
Monte Carlo performance summaries: bias, RMSE and unmatched percentages.
"""

from dataclasses import dataclass
from typing import Dict, Iterable, List, NamedTuple, Sequence, Tuple

import numpy as np

from utils.exceptions import DataError


class EstimateRecord(NamedTuple):
    """One estimate from one replication."""

    replication: int
    ps_kind: str
    estimator: str
    caliper: float  # NaN for estimators that do not match
    subgroup: str
    size_class: str
    estimate: float


class UnmatchedRecord(NamedTuple):
    replication: int
    ps_kind: str
    caliper: float
    unmatched_pct: float
    # No matched set formed, so this replication has no matching estimates here
    no_sets: bool = False


class SummaryRow(NamedTuple):
    ps_kind: str
    estimator: str
    size_class: str
    caliper: float
    bias: float
    rmse: float
    n: int


class UnmatchedRow(NamedTuple):
    ps_kind: str
    caliper: float
    unmatched_pct: float
    n: int
    n_no_sets: int = 0


@dataclass(frozen=True)
class McSummary:
    rows: Tuple[SummaryRow, ...]
    unmatched: Tuple[UnmatchedRow, ...]
    n_replications: int
    n_failed: int = 0
    true_ett: float = 0.0

    def lookup(self, ps_kind: str, estimator: str, size_class: str, caliper: float = float("nan")) -> SummaryRow:
        for row in self.rows:
            if (
                row.ps_kind == ps_kind
                and row.estimator == estimator
                and row.size_class == size_class
                and _same_caliper(row.caliper, caliper)
            ):
                return row
        raise KeyError((ps_kind, estimator, size_class, caliper))

    @property
    def n_no_sets(self) -> int:
        """(replication, ps kind, caliper) combinations whose matching produced no set."""
        return sum(row.n_no_sets for row in self.unmatched)

    def unmatched_pct(self, ps_kind: str, caliper: float) -> float:
        for row in self.unmatched:
            if row.ps_kind == ps_kind and _same_caliper(row.caliper, caliper):
                return row.unmatched_pct
        raise KeyError((ps_kind, caliper))


def _same_caliper(a: float, b: float) -> bool:
    return (np.isnan(a) and np.isnan(b)) or a == b


def _caliper_key(value: float) -> float:
    return float("nan") if value is None or np.isnan(value) else float(value)


def bias_rmse(estimates: Sequence[float], truth: float) -> Tuple[float, float]:
    errors = np.asarray(estimates, dtype=float) - truth
    return float(np.mean(errors)), float(np.sqrt(np.mean(errors**2)))


def summarize_replications(
    estimates: Iterable[EstimateRecord],
    unmatched: Iterable[UnmatchedRecord],
    true_ett: float,
    n_failed: int = 0,
) -> McSummary:
    """
    Bias and RMSE against ``true_ett`` per (ps kind, estimator, size class, caliper).

    Errors are pooled over replications and over the subgroups of a class.
    Groups are emitted in order of first appearance.

    Raises:
        DataError: Fewer than two replications
    """
    estimates = list(estimates)
    unmatched = list(unmatched)
    replications = {r.replication for r in estimates} | {r.replication for r in unmatched}
    if len(replications) < 2:
        raise DataError(f"summaries need at least 2 replications, got {len(replications)}")

    grouped: Dict[Tuple[str, str, str, str], List[float]] = {}
    calipers: Dict[Tuple[str, str, str, str], float] = {}
    for record in estimates:
        caliper = _caliper_key(record.caliper)
        key = (record.ps_kind, record.estimator, record.size_class, repr(caliper))
        grouped.setdefault(key, []).append(record.estimate)
        calipers[key] = caliper

    rows = []
    for key, values in grouped.items():
        bias, rmse = bias_rmse(values, true_ett)
        rows.append(SummaryRow(key[0], key[1], key[2], calipers[key], bias, rmse, len(values)))

    pct: Dict[Tuple[str, float], List[float]] = {}
    no_sets: Dict[Tuple[str, float], int] = {}
    for record in unmatched:
        group = (record.ps_kind, float(record.caliper))
        pct.setdefault(group, []).append(record.unmatched_pct)
        no_sets[group] = no_sets.get(group, 0) + int(record.no_sets)
    unmatched_rows = [
        UnmatchedRow(kind, caliper, float(np.mean(values)), len(values), no_sets[(kind, caliper)])
        for (kind, caliper), values in pct.items()
    ]

    return McSummary(
        rows=tuple(rows),
        unmatched=tuple(unmatched_rows),
        n_replications=len(replications),
        n_failed=n_failed,
        true_ett=true_ett,
    )
