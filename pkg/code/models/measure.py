"""
Measurement-error covariance for school-by-subgroup average scores.

The error in an obtained subgroup average is the mean of that subgroup's
per-student measurement errors, so its variance is csem^2 / m. Subgroups are
mutually exclusive, which keeps every per-school covariance diagonal; the
model therefore stores one variance per (school, cell) and nothing else.
"""

from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from mepscore_types import CellKey, Dataset, format_cell_key
from utils.exceptions import DataError
from utils.logging import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class CsemTable:
    """Piecewise-linear CSEM curve for one assessment."""

    assessment_key: str
    scores: Tuple[float, ...]
    csems: Tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.scores:
            raise DataError(f"CSEM table for {self.assessment_key} has no knots")
        if len(self.scores) != len(self.csems):
            raise DataError(f"CSEM table for {self.assessment_key}: score and csem lengths differ")
        if any(b <= a for a, b in zip(self.scores, self.scores[1:])):
            raise DataError(f"CSEM table for {self.assessment_key}: scores must be strictly increasing")
        if any(not c > 0 for c in self.csems):
            raise DataError(f"CSEM table for {self.assessment_key}: every csem must be positive")

    @classmethod
    def from_pairs(cls, assessment_key: str, pairs: Iterable[Tuple[float, float]]) -> "CsemTable":
        knots = sorted((float(s), float(c)) for s, c in pairs)
        return cls(
            assessment_key,
            tuple(s for s, _ in knots),
            tuple(c for _, c in knots),
        )

    @classmethod
    def constant(cls, assessment_key: str, csem: float) -> "CsemTable":
        return cls(assessment_key, (0.0,), (float(csem),))


def lookup_csem(table: CsemTable, score: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Interpolate linearly between knots; hold the end values beyond them."""
    result = np.interp(score, table.scores, table.csems)
    if np.ndim(result) == 0:
        return float(result)
    return result


@dataclass(frozen=True)
class MeasurementModel:
    """
    Diagonal measurement-error variances, one per (school, cell).

    ``variances`` has one row per school (dataset record order) and one
    column per cell key; NaN marks cells without an estimate.
    """

    school_ids: Tuple[str, ...]
    cell_keys: Tuple[CellKey, ...]
    variances: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.variances, dtype=float, copy=True)
        values.setflags(write=False)
        object.__setattr__(self, "variances", values)
        present = values[~np.isnan(values)]
        if np.any(present <= 0):
            raise DataError("measurement error variances must be strictly positive")

    def error_variance(self, school_id: str, key: CellKey) -> Optional[float]:
        i = self.school_ids.index(school_id)
        value = self.variances[i, self.cell_keys.index(key)]
        return None if np.isnan(value) else float(value)

    def matrix(self, keys: Optional[Sequence[CellKey]] = None) -> np.ndarray:
        """Variance columns for ``keys`` (all keys by default), NaN where missing."""
        if keys is None:
            return self.variances
        columns = [self.cell_keys.index(k) for k in keys]
        return self.variances[:, columns]


def build_sigma(
    dataset: Dataset,
    csem_tables: Optional[Mapping[str, CsemTable]] = None,
    scores: Optional[np.ndarray] = None,
    keys: Optional[Sequence[CellKey]] = None,
) -> MeasurementModel:
    """
    Build error variances csem^2 / m for every cell with a size.

    Args:
        dataset: Source of sizes, obtained averages and per-cell CSEMs
        csem_tables: When given, CSEMs come from these per-assessment tables
            evaluated at ``scores`` instead of from the cells
        scores: Score at which to evaluate the tables, laid out like
            ``dataset.cell_keys``; defaults to the obtained averages
        keys: Restrict the model to these cells (others are left NaN)

    Raises:
        DataError: A non-withheld cell has no CSEM available
    """
    all_keys = dataset.cell_keys
    wanted = set(all_keys if keys is None else keys)
    sizes = dataset.size_matrix()
    obtained, observed = dataset.obtained_matrix()

    if csem_tables is None:
        csem = dataset.csem_matrix()
    else:
        if scores is None:
            scores = obtained
        scores = np.asarray(scores, dtype=float)
        csem = np.full(sizes.shape, np.nan)
        for j, key in enumerate(all_keys):
            table = csem_tables.get(key[1])
            if table is not None:
                column = scores[:, j]
                finite = np.isfinite(column)
                csem[finite, j] = lookup_csem(table, column[finite])

    variances = np.full(sizes.shape, np.nan)
    missing = []
    for j, key in enumerate(all_keys):
        if key not in wanted:
            continue
        has_size = ~np.isnan(sizes[:, j])
        has_csem = ~np.isnan(csem[:, j])
        usable = has_size & has_csem
        variances[usable, j] = csem[usable, j] ** 2 / sizes[usable, j]
        for i in np.flatnonzero(observed[:, j] & ~has_csem):
            missing.append(f"{dataset.records[i].school_id}/{format_cell_key(key)}")

    if missing:
        shown = ", ".join(missing[:10])
        more = f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""
        raise DataError(f"missing CSEM for observed cells: {shown}{more}")

    logger.debug(
        "sigma_built",
        source="table" if csem_tables is not None else "cells",
        cells=int(np.sum(~np.isnan(variances))),
    )
    return MeasurementModel(dataset.school_ids, all_keys, variances)


def merge_sigma(models: Iterable[MeasurementModel]) -> MeasurementModel:
    """Overlay several models on the same layout; later entries win."""
    models = list(models)
    if not models:
        raise DataError("no measurement models to merge")
    base = models[0]
    merged = np.array(base.variances, copy=True)
    for model in models[1:]:
        if model.cell_keys != base.cell_keys or model.school_ids != base.school_ids:
            raise DataError("measurement models have different layouts")
        present = ~np.isnan(model.variances)
        merged[present] = model.variances[present]
    return MeasurementModel(base.school_ids, base.cell_keys, merged)


def sigma_from_tables(
    dataset: Dataset, csem_tables: Mapping[str, CsemTable], scores: np.ndarray
) -> MeasurementModel:
    """Variances for every sized cell with CSEMs looked up at ``scores``."""
    keys = [k for k in dataset.cell_keys if k[1] in csem_tables]
    return build_sigma(dataset, csem_tables, scores=scores, keys=keys)


def describe(model: MeasurementModel) -> Dict[str, float]:
    """Mean error SD per cell key, for log output and run summaries."""
    out: Dict[str, float] = {}
    for j, key in enumerate(model.cell_keys):
        column = model.variances[:, j]
        column = column[~np.isnan(column)]
        if column.size:
            out[format_cell_key(key)] = float(np.mean(np.sqrt(column)))
    return out
