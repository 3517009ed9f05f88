"""
Type definitions for mepscore.

This package holds the data model shared by every other package:
- Base aliases and exit codes
- School records, subgroup cells and the Dataset container
- Invariant validation
"""

from .base import CellKey, ExitCode, PathLike, PsKind, PS_KINDS, format_cell_key
from .dataset import (
    Dataset,
    SchoolRecord,
    SubgroupCell,
    Violation,
    count_by_treatment,
    validate,
)

__all__ = [
    # Base types
    "CellKey",
    "ExitCode",
    "PathLike",
    "PsKind",
    "PS_KINDS",
    "format_cell_key",
    # Data model
    "Dataset",
    "SchoolRecord",
    "SubgroupCell",
    "Violation",
    "count_by_treatment",
    "validate",
]
