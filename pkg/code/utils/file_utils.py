"""
File formats: the wide school CSV, CSEM tables, result tables and YAML.

The school file is UTF-8, comma separated, one row per school. Its header is
``school_id``, ``treatment``, one ``z_<name>`` column per covariate, then for
each (subgroup, assessment) cell the columns ``m_<s>_<a>`` (size),
``w_<s>_<a>`` (obtained average), ``csem_<s>_<a>`` and ``y_<s>_<a>``
(outcome). Only the size column is required per cell. Cell keys are split at
the last underscore, so assessment keys may not contain one. Empty fields
mean "absent"; an empty obtained average with a size is a withheld cell.
"""

import csv
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import pandas as pd
import yaml

from mepscore_types import CellKey, Dataset, PathLike, SchoolRecord, SubgroupCell, validate
from mepscore_types.base import format_cell_key
from utils.exceptions import DataError, UsageError
from utils.logging import get_logger

logger = get_logger(__name__)

CELL_PREFIXES = ("m", "w", "csem", "y")
_CELL_ATTRS = {"m": "size", "w": "obtained_avg", "csem": "csem", "y": "outcome_avg"}
_REQUIRED = ("school_id", "treatment")


# ----------------------------------------------------------------------
# School data
# ----------------------------------------------------------------------


def _split_cell_column(column: str) -> Optional[Tuple[str, CellKey]]:
    """``w_black_g5m`` -> (``w``, (``black``, ``g5m``)); None for non-cell columns."""
    for prefix in sorted(CELL_PREFIXES, key=len, reverse=True):
        head = prefix + "_"
        if column.startswith(head):
            rest = column[len(head):]
            subgroup, sep, assessment = rest.rpartition("_")
            if not sep or not subgroup or not assessment:
                raise DataError(f"cell column {column!r} must look like {prefix}_<subgroup>_<assessment>")
            return prefix, (subgroup, assessment)
    return None


def _parse_header(columns: Sequence[str]) -> Tuple[List[str], List[CellKey], Dict[CellKey, Dict[str, str]]]:
    missing = [c for c in _REQUIRED if c not in columns]
    if missing:
        raise DataError(f"header is missing required column(s): {', '.join(missing)}")

    covariates: List[str] = []
    keys: List[CellKey] = []
    layout: Dict[CellKey, Dict[str, str]] = {}
    for column in columns:
        if column in _REQUIRED:
            continue
        if column.startswith("z_"):
            covariates.append(column[2:])
            continue
        parsed = _split_cell_column(column)
        if parsed is None:
            raise DataError(f"unrecognized column {column!r}")
        prefix, key = parsed
        if key not in layout:
            keys.append(key)
            layout[key] = {}
        if prefix in layout[key]:
            raise DataError(f"duplicate column {column!r}")
        layout[key][prefix] = column

    for key in keys:
        if "m" not in layout[key]:
            raise DataError(f"cell {format_cell_key(key)} has no size column m_{format_cell_key(key)}")
    return covariates, keys, layout


def _number(text: str, line: int, column: str) -> Optional[float]:
    text = text.strip()
    if not text:
        return None
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"line {line}: {column} is not a number: {text!r}") from None
    if not math.isfinite(value):
        raise DataError(f"line {line}: {column} must be finite, got {text!r}")
    return value


def _integer(text: str, line: int, column: str) -> Optional[int]:
    value = _number(text, line, column)
    if value is None:
        return None
    if value != int(value):
        raise DataError(f"line {line}: {column} must be a whole number, got {text!r}")
    return int(value)


def _record_lines(path: Path) -> List[int]:
    """Line number of every non-blank data row. Rows of the wrong width are rejected."""
    lines: List[int] = []
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: file is empty")
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"line {reader.line_num}: expected {len(header)} fields, got {len(row)}")
            lines.append(reader.line_num)
    return lines


def load_dataset(file_path: PathLike) -> Dataset:
    """
    Read a school CSV into a Dataset.

    Raises:
        FileNotFoundError: If the file does not exist
        DataError: Malformed rows (reported with their line number),
            duplicate school ids, or a header without ``treatment``
    """
    path = Path(file_path)
    if not path.is_file():
        raise FileNotFoundError(f"Data file not found: {file_path}")

    lines = _record_lines(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.ParserError as e:
        raise DataError(f"{path}: malformed CSV: {e}") from None
    except pd.errors.EmptyDataError:
        raise DataError(f"{path}: file is empty") from None

    columns = [str(c).strip() for c in frame.columns]
    covariate_names, keys, layout = _parse_header(columns)
    frame.columns = columns

    records: List[SchoolRecord] = []
    seen: Dict[str, int] = {}
    for offset, row in enumerate(frame.itertuples(index=False, name=None)):
        line = lines[offset]
        values = dict(zip(columns, row))
        school_id = values["school_id"].strip()
        if not school_id:
            raise DataError(f"line {line}: school_id is empty")
        if school_id in seen:
            raise DataError(f"line {line}: duplicate school_id {school_id!r} (first seen on line {seen[school_id]})")
        seen[school_id] = line

        treatment = _integer(values["treatment"], line, "treatment")
        if treatment not in (0, 1):
            raise DataError(f"line {line}: treatment must be 0 or 1, got {values['treatment']!r}")

        covariates = []
        for name in covariate_names:
            value = _number(values[f"z_{name}"], line, f"z_{name}")
            if value is None:
                raise DataError(f"line {line}: covariate z_{name} is missing")
            covariates.append(value)

        cells = []
        for key in keys:
            fields = {
                prefix: values[column].strip() for prefix, column in layout[key].items()
            }
            size = _integer(fields["m"], line, layout[key]["m"])
            if size is None:
                if any(fields.get(p) for p in ("w", "csem", "y")):
                    raise DataError(f"line {line}: cell {format_cell_key(key)} has values but no size")
                continue
            parsed = {
                _CELL_ATTRS[p]: _number(fields[p], line, layout[key][p])
                for p in ("w", "csem", "y")
                if p in fields
            }
            cells.append(SubgroupCell(key[0], key[1], size, **parsed))

        records.append(SchoolRecord(school_id, treatment, tuple(covariates), tuple(cells)))

    dataset = Dataset(tuple(records), tuple(covariate_names), tuple(keys))
    violations = validate(dataset)
    if violations:
        shown = "; ".join(f"{v.school_id}.{v.field}: {v.rule}" for v in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        raise DataError(f"{path}: {shown}{more}")

    logger.info("dataset_loaded", path=str(path), schools=len(dataset), cells=len(keys))
    return dataset


def _text(value: Optional[float]) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def write_dataset(dataset: Dataset, file_path: PathLike) -> Path:
    """Write a Dataset in the school CSV format; floats are written with repr()."""
    columns = ["school_id", "treatment"] + [f"z_{n}" for n in dataset.covariate_names]
    for key in dataset.cell_keys:
        columns += [f"{p}_{format_cell_key(key)}" for p in CELL_PREFIXES]

    rows = []
    for record in dataset.records:
        row = [record.school_id, str(record.treatment)] + [_text(v) for v in record.covariates]
        for key in dataset.cell_keys:
            cell = record.cell(key)
            if cell is None:
                row += [""] * len(CELL_PREFIXES)
            else:
                row += [
                    str(cell.size),
                    _text(cell.obtained_avg),
                    _text(cell.csem),
                    _text(cell.outcome_avg),
                ]
        rows.append(row)

    return write_table(pd.DataFrame(rows, columns=columns, dtype=str), file_path)


# ----------------------------------------------------------------------
# CSEM tables
# ----------------------------------------------------------------------


def load_csem_table(file_path: PathLike, assessment_key: Optional[str] = None):
    """Read a two-column (score, csem) CSV; the assessment defaults to the file stem."""
    from models.measure import CsemTable

    path = Path(file_path)
    try:
        frame = pd.read_csv(path, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"{path}: unreadable CSEM table: {e}") from None
    wanted = {"score", "csem"}
    if not wanted.issubset(frame.columns):
        raise DataError(f"{path}: CSEM table needs columns score and csem")
    try:
        pairs = list(zip(frame["score"].astype(float), frame["csem"].astype(float)))
    except ValueError as e:
        raise DataError(f"{path}: {e}") from None
    return CsemTable.from_pairs(assessment_key or path.stem, pairs)


def load_csem_tables(directory: PathLike) -> Dict[str, Any]:
    """One table per ``<assessment>.csv`` in ``directory``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"CSEM directory not found: {directory}")
    tables = {p.stem: load_csem_table(p) for p in sorted(directory.glob("*.csv"))}
    if not tables:
        raise DataError(f"no CSEM tables (*.csv) in {directory}")
    logger.debug("csem_tables_loaded", assessments=sorted(tables))
    return tables


# ----------------------------------------------------------------------
# Result tables
# ----------------------------------------------------------------------


def write_table(rows: Union[pd.DataFrame, Iterable[Mapping[str, Any]]], file_path: PathLike) -> Path:
    """Write rows as CSV with LF line endings, creating parent directories."""
    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows))
    path = Path(file_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    logger.debug("table_written", path=str(path), rows=len(frame))
    return path


def write_matched_sets(result, file_path: PathLike) -> Path:
    """One row per matched school: set_id, school_id, role, weight."""
    rows = []
    for matched in result.sets:
        for sid in matched.treated:
            rows.append({"set_id": matched.set_id, "school_id": sid, "role": "treated", "weight": 1.0})
        for sid in matched.controls:
            rows.append(
                {
                    "set_id": matched.set_id,
                    "school_id": sid,
                    "role": "control",
                    "weight": matched.control_weight,
                }
            )
    columns = ["set_id", "school_id", "role", "weight"]
    return write_table(pd.DataFrame(rows, columns=columns), file_path)


def write_estimates(estimates, file_path: PathLike) -> Path:
    columns = ["estimator", "ps_kind", "subgroup", "assessment", "point", "n_treated", "n_control"]
    return write_table(pd.DataFrame([e.as_row() for e in estimates], columns=columns), file_path)


# ----------------------------------------------------------------------
# Structured files
# ----------------------------------------------------------------------

_FILE_PARSER = {"json": json.load, "yaml": yaml.safe_load}


def load_structured_file(file_path: PathLike, file_format: str = "auto") -> Dict[str, Any]:
    """
    Load a YAML or JSON mapping.

    Args:
        file_path: Path to the file
        file_format: 'json', 'yaml', or 'auto' (detect from extension)

    Raises:
        FileNotFoundError: If the file doesn't exist
        UsageError: If the file does not parse to a mapping
    """
    path = Path(file_path)
    if not path.exists():
        raise FileNotFoundError(f"Configuration file not found: {file_path}")

    if file_format == "auto":
        file_format = "json" if path.suffix.lower() == ".json" else "yaml"

    try:
        with open(path, "r", encoding="utf-8") as f:
            result = _FILE_PARSER[file_format](f)
    except (yaml.YAMLError, json.JSONDecodeError) as e:
        raise UsageError(f"Invalid {file_format.upper()} in {file_path}: {e}") from None
    if result is None:
        return {}
    if not isinstance(result, dict):
        raise UsageError(f"{file_path} must contain a mapping at the top level")
    return result


def write_structured_file(data: Mapping[str, Any], file_path: PathLike) -> Path:
    """Write YAML with sorted keys so identical data gives identical bytes."""
    path = Path(file_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        yaml.safe_dump(dict(data), f, sort_keys=True, default_flow_style=False, allow_unicode=True)
    return path


def validate_file_path(file_path: PathLike) -> bool:
    """True if ``file_path`` exists and is a regular file."""
    try:
        path = Path(file_path)
        return path.exists() and path.is_file()
    except (OSError, ValueError):
        return False
