"""
Base type definitions used throughout mepscore.
"""

import os
from enum import IntEnum
from pathlib import Path
from typing import Literal, Tuple, Union

# Path-like objects
PathLike = Union[str, Path, os.PathLike]

# (subgroup key, assessment key); ordering is fixed at load time
CellKey = Tuple[str, str]

PsKind = Literal["naive", "rc", "ml"]
PS_KINDS: Tuple[str, ...] = ("ml", "rc", "naive")


class ExitCode(IntEnum):
    """Process exit codes for the mepscore CLI."""

    SUCCESS = 0
    USAGE_ERROR = 1
    DATA_ERROR = 2
    NUMERICAL_ERROR = 3
    USER_INTERRUPT = 130


def format_cell_key(key: CellKey) -> str:
    """Render a cell key the way CSV headers spell it (``subgroup_assessment``)."""
    return f"{key[0]}_{key[1]}"
