"""
School-level data model.

A Dataset is a frozen collection of SchoolRecord values. Each record carries
error-free covariates and one SubgroupCell per (subgroup, assessment) pair in
which the school had test takers. A cell whose obtained average is absent is
"withheld": it still has a size (and usually a CSEM) but never contributes to
a likelihood.

The order of ``Dataset.cell_keys`` is fixed when the dataset is built and
defines the column layout of every matrix assembled downstream.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .base import CellKey


@dataclass(frozen=True)
class SubgroupCell:
    """One subgroup's aggregate on one assessment at one school."""

    subgroup_key: str
    assessment_key: str
    size: int
    obtained_avg: Optional[float] = None
    csem: Optional[float] = None
    outcome_avg: Optional[float] = None

    @property
    def key(self) -> CellKey:
        return (self.subgroup_key, self.assessment_key)

    @property
    def withheld(self) -> bool:
        return self.obtained_avg is None


@dataclass(frozen=True)
class SchoolRecord:
    """A school's treatment status, covariates and subgroup cells."""

    school_id: str
    treatment: int
    covariates: Tuple[float, ...]
    cells: Tuple[SubgroupCell, ...] = ()

    def cell(self, key: CellKey) -> Optional[SubgroupCell]:
        for cell in self.cells:
            if cell.key == key:
                return cell
        return None

    def has_withheld(self, keys: Iterable[CellKey]) -> bool:
        """True if any of ``keys`` is withheld or absent at this school."""
        for key in keys:
            cell = self.cell(key)
            if cell is None or cell.withheld:
                return True
        return False


class Violation(NamedTuple):
    """A broken data invariant: which record, which field, which rule."""

    school_id: str
    field: str
    rule: str


@dataclass(frozen=True)
class Dataset:
    """Immutable container of school records and their key layout."""

    records: Tuple[SchoolRecord, ...]
    covariate_names: Tuple[str, ...]
    cell_keys: Tuple[CellKey, ...]
    _index: Dict[str, int] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "_index", {r.school_id: i for i, r in enumerate(self.records)}
        )

    # ------------------------------------------------------------------
    # Key layout
    # ------------------------------------------------------------------

    @property
    def subgroup_keys(self) -> Tuple[str, ...]:
        return tuple(dict.fromkeys(k[0] for k in self.cell_keys))

    @property
    def assessment_keys(self) -> Tuple[str, ...]:
        return tuple(dict.fromkeys(k[1] for k in self.cell_keys))

    def keys_for(self, assessment: str) -> Tuple[CellKey, ...]:
        return tuple(k for k in self.cell_keys if k[1] == assessment)

    # ------------------------------------------------------------------
    # Record access
    # ------------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.records)

    @property
    def school_ids(self) -> Tuple[str, ...]:
        return tuple(r.school_id for r in self.records)

    def index_of(self, school_id: str) -> int:
        return self._index[school_id]

    def record(self, school_id: str) -> SchoolRecord:
        return self.records[self._index[school_id]]

    # ------------------------------------------------------------------
    # Matrix assembly (rows in record order, columns in key order)
    # ------------------------------------------------------------------

    def treatment_vector(self) -> np.ndarray:
        return np.array([r.treatment for r in self.records], dtype=float)

    def covariate_matrix(self) -> np.ndarray:
        p = len(self.covariate_names)
        if not self.records:
            return np.zeros((0, p))
        return np.array([r.covariates for r in self.records], dtype=float).reshape(len(self.records), p)

    def _cell_matrix(self, attr: str, keys: Optional[Sequence[CellKey]]) -> np.ndarray:
        keys = tuple(self.cell_keys if keys is None else keys)
        out = np.full((len(self.records), len(keys)), np.nan)
        for i, record in enumerate(self.records):
            for j, key in enumerate(keys):
                cell = record.cell(key)
                if cell is not None:
                    value = getattr(cell, attr)
                    if value is not None:
                        out[i, j] = value
        return out

    def obtained_matrix(
        self, keys: Optional[Sequence[CellKey]] = None
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Obtained averages (NaN where withheld or absent) and the observed mask."""
        values = self._cell_matrix("obtained_avg", keys)
        return values, ~np.isnan(values)

    def size_matrix(self, keys: Optional[Sequence[CellKey]] = None) -> np.ndarray:
        """Subgroup sizes; NaN where the school has no such cell."""
        return self._cell_matrix("size", keys)

    def csem_matrix(self, keys: Optional[Sequence[CellKey]] = None) -> np.ndarray:
        return self._cell_matrix("csem", keys)

    def outcome_matrix(self, keys: Optional[Sequence[CellKey]] = None) -> np.ndarray:
        return self._cell_matrix("outcome_avg", keys)

    # ------------------------------------------------------------------
    # Derived datasets
    # ------------------------------------------------------------------

    def replace_records(self, records: Iterable[SchoolRecord]) -> "Dataset":
        return Dataset(tuple(records), self.covariate_names, self.cell_keys)

    def with_masked_cells(self, masked: Iterable[Tuple[str, CellKey]]) -> "Dataset":
        """Return a copy where the given (school_id, key) cells are withheld."""
        by_school: Dict[str, List[CellKey]] = {}
        for school_id, key in masked:
            by_school.setdefault(school_id, []).append(key)

        records = []
        for record in self.records:
            keys = by_school.get(record.school_id)
            if not keys:
                records.append(record)
                continue
            cells = tuple(
                replace(c, obtained_avg=None) if c.key in keys else c for c in record.cells
            )
            records.append(replace(record, cells=cells))
        return self.replace_records(records)


def validate(dataset: Dataset) -> List[Violation]:
    """
    Check every data invariant and report the breaches.

    Violations are returned as data; nothing is raised. An empty list means
    the dataset is usable downstream.
    """
    violations: List[Violation] = []
    n_covariates = len(dataset.covariate_names)
    known_keys = set(dataset.cell_keys)

    seen_ids = set()
    for record in dataset.records:
        sid = record.school_id
        if sid in seen_ids:
            violations.append(Violation(sid, "school_id", "school_id is unique"))
        seen_ids.add(sid)

        if record.treatment not in (0, 1):
            violations.append(Violation(sid, "treatment", "treatment in {0, 1}"))

        if len(record.covariates) != n_covariates:
            violations.append(
                Violation(sid, "covariates", f"covariates has length {n_covariates}")
            )

        cell_keys_seen = set()
        for cell in record.cells:
            label = f"cells[{cell.subgroup_key},{cell.assessment_key}]"
            if cell.key in cell_keys_seen:
                violations.append(Violation(sid, label, "subgroup/assessment key unique"))
            cell_keys_seen.add(cell.key)
            if cell.key not in known_keys:
                violations.append(Violation(sid, label, "key declared by dataset"))
            if cell.size < 1:
                violations.append(Violation(sid, f"{label}.size", "size >= 1"))
            if cell.csem is not None and not cell.csem > 0:
                violations.append(Violation(sid, f"{label}.csem", "csem > 0"))

    return violations


def count_by_treatment(dataset: Dataset) -> Mapping[int, int]:
    t = dataset.treatment_vector()
    return {1: int(np.sum(t == 1)), 0: int(np.sum(t == 0))}
