"""
Covariate balance as standardized differences in weighted means.

The denominator of every standardized difference is the unweighted standard
deviation of the pooled unmatched sample, computed once per (family, cell)
and reused for each matched sample so that all samples share one scale.
"""

from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from mepscore_types import CellKey, format_cell_key
from utils.exceptions import DataError

UNMATCHED = "unmatched"


class BalanceRow(NamedTuple):
    sample: str
    family: str
    cell_key: CellKey
    d_s: float


class OverviewRow(NamedTuple):
    sample: str
    family: str
    mean_abs_d: float
    max_abs_d: float
    worst_cell: str


class ClassRow(NamedTuple):
    sample: str
    family: str
    size_class: str
    mean_abs_d: float


def pooled_sd(values: np.ndarray) -> float:
    """Sample SD (ddof=1) of all non-missing values."""
    values = np.asarray(values, dtype=float)
    values = values[~np.isnan(values)]
    if values.size < 2:
        return float("nan")
    return float(np.std(values, ddof=1))


def standardized_difference(
    values: np.ndarray,
    groups: np.ndarray,
    weights: Optional[np.ndarray] = None,
    sd: Optional[float] = None,
) -> float:
    """
    (weighted treated mean - weighted control mean) / sd.

    Args:
        values: One value per unit; NaN entries are ignored
        groups: 1 for treated, 0 for control
        weights: Nonnegative unit weights (all ones when omitted)
        sd: Denominator; defaults to the pooled SD of ``values``

    Raises:
        DataError: A group has no positive weight, or the SD is zero
    """
    values = np.asarray(values, dtype=float)
    groups = np.asarray(groups)
    weights = np.ones_like(values) if weights is None else np.asarray(weights, dtype=float)
    if sd is None:
        sd = pooled_sd(values)
    if not np.isfinite(sd) or sd <= 0:
        raise DataError("standardized difference needs a positive pooling SD")

    present = ~np.isnan(values)
    means = []
    for label in (1, 0):
        mask = present & (groups == label)
        total = float(np.sum(weights[mask]))
        if total <= 0:
            raise DataError("both groups need positive total weight")
        means.append(float(np.sum(weights[mask] * values[mask]) / total))
    return (means[0] - means[1]) / sd


@dataclass(frozen=True)
class BalanceReport:
    rows: Tuple[BalanceRow, ...]
    denominators: Mapping[Tuple[str, CellKey], float]
    denominator_rule: str = "unweighted pooled SD of the unmatched sample"

    def for_sample(self, sample: str) -> List[BalanceRow]:
        return [r for r in self.rows if r.sample == sample]

    def samples(self) -> List[str]:
        return list(dict.fromkeys(r.sample for r in self.rows))

    def families(self) -> List[str]:
        return list(dict.fromkeys(r.family for r in self.rows))

    def to_records(self) -> List[Dict[str, object]]:
        return [
            {
                "sample": r.sample,
                "family": r.family,
                "subgroup": r.cell_key[0],
                "assessment": r.cell_key[1],
                "d_s": r.d_s,
            }
            for r in self.rows
        ]


def balance_report(
    families: Mapping[str, np.ndarray],
    treatment: np.ndarray,
    samples: Mapping[str, np.ndarray],
    cell_keys: Sequence[CellKey],
) -> BalanceReport:
    """
    Standardized differences for every (sample, family, cell).

    Args:
        families: Family name -> (units x cells) value matrix, e.g. true
            scores, obtained averages, EB predictions
        treatment: 0/1 per unit
        samples: Sample name -> per-unit weights; the unmatched sample is
            added with unit weights when absent
        cell_keys: Column labels of the family matrices

    A sample whose weights leave a group empty for some cell yields NaN there.
    """
    treatment = np.asarray(treatment)
    n = treatment.size
    ordered: Dict[str, np.ndarray] = {UNMATCHED: np.ones(n)}
    ordered.update({name: np.asarray(w, dtype=float) for name, w in samples.items()})

    denominators: Dict[Tuple[str, CellKey], float] = {}
    for family, matrix in families.items():
        for j, key in enumerate(cell_keys):
            denominators[(family, key)] = pooled_sd(np.asarray(matrix)[:, j])

    rows: List[BalanceRow] = []
    for sample, weights in ordered.items():
        for family, matrix in families.items():
            matrix = np.asarray(matrix, dtype=float)
            for j, key in enumerate(cell_keys):
                try:
                    d = standardized_difference(
                        matrix[:, j], treatment, weights, denominators[(family, key)]
                    )
                except DataError:
                    d = float("nan")
                rows.append(BalanceRow(sample, family, tuple(key), d))
    return BalanceReport(tuple(rows), denominators)


def balance_overview(report: BalanceReport) -> List[OverviewRow]:
    """Average and worst |d_s| per (sample, family)."""
    out: List[OverviewRow] = []
    for sample in report.samples():
        for family in report.families():
            rows = [r for r in report.rows if r.sample == sample and r.family == family and np.isfinite(r.d_s)]
            if not rows:
                continue
            magnitudes = np.abs([r.d_s for r in rows])
            worst = rows[int(np.argmax(magnitudes))]
            out.append(
                OverviewRow(
                    sample,
                    family,
                    float(np.mean(magnitudes)),
                    float(np.max(magnitudes)),
                    format_cell_key(worst.cell_key),
                )
            )
    return out


def average_by_class(
    rows: Iterable[BalanceRow], classes: Mapping[CellKey, str]
) -> List[ClassRow]:
    """Mean |d_s| over cells sharing a size class, per (sample, family)."""
    grouped: Dict[Tuple[str, str, str], List[float]] = {}
    for row in rows:
        size_class = classes.get(tuple(row.cell_key))
        if size_class is None or not np.isfinite(row.d_s):
            continue
        grouped.setdefault((row.sample, row.family, size_class), []).append(abs(row.d_s))
    return [ClassRow(s, f, c, float(np.mean(v))) for (s, f, c), v in grouped.items()]


def ps_distribution_summary(logits: np.ndarray, treatment: np.ndarray) -> Dict[str, Dict[str, float]]:
    """Mean, SD and quantiles of PS logits for the treated and control groups."""
    logits = np.asarray(logits, dtype=float)
    treatment = np.asarray(treatment)
    out: Dict[str, Dict[str, float]] = {}
    for name, label in (("treated", 1), ("control", 0)):
        values = logits[treatment == label]
        if values.size == 0:
            continue
        q05, q25, q50, q75, q95 = np.quantile(values, [0.05, 0.25, 0.5, 0.75, 0.95])
        out[name] = {
            "n": float(values.size),
            "mean": float(np.mean(values)),
            "sd": float(np.std(values, ddof=1)) if values.size > 1 else 0.0,
            "q05": float(q05),
            "q25": float(q25),
            "median": float(q50),
            "q75": float(q75),
            "q95": float(q95),
        }
    return out
