"""
Run manifests: what was run, with which settings, by which code.

A manifest holds no timestamps or host details, so rerunning the same
configuration writes the same bytes.
"""

import hashlib
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import yaml

from mepscore_types import PathLike
from utils.file_utils import write_structured_file

PACKAGE_NAME = "mepscore"
LIBRARIES = ("numpy", "scipy", "pandas", "networkx", "matplotlib")

# Choices a reader needs to interpret any output
DEFAULT_DECISIONS: Dict[str, Any] = {
    "d_s_denominator": "unweighted pooled SD of the unmatched sample",
    "weighting_normalization": "normalized by the sum of control odds",
    "matching_objective": "match every caliper-feasible treated; then most controls; then least distance",
    "mixture_tolerance": 2e-3,
}

VARIANCE_SOURCES = {
    "cells": "per-cell CSEM squared over subgroup size",
    "tables": "CSEM tables at the first-pass EB predictions, squared over subgroup size",
}


def variance_source(from_tables: bool) -> Dict[str, str]:
    """Manifest entry naming where the measurement-error variances came from."""
    return {"ml_score_variance": VARIANCE_SOURCES["tables" if from_tables else "cells"]}


def package_version() -> str:
    try:
        from __version__ import __version__

        return __version__
    except ImportError:
        return "unknown"


def library_versions() -> Dict[str, str]:
    versions = {}
    for name in LIBRARIES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "not installed"
    return versions


def config_hash(config: Mapping[str, Any]) -> str:
    """SHA-256 of the canonical YAML rendering of ``config``."""
    canonical = yaml.safe_dump(dict(config), sort_keys=True, default_flow_style=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_manifest(
    config: Mapping[str, Any],
    mode: str,
    seed: Optional[int] = None,
    decisions: Optional[Mapping[str, Any]] = None,
) -> Dict[str, Any]:
    merged = dict(DEFAULT_DECISIONS)
    merged.update(decisions or {})
    return {
        "package": PACKAGE_NAME,
        "version": package_version(),
        "libraries": library_versions(),
        "mode": mode,
        "seed": seed,
        "config_hash": config_hash(config),
        "config": dict(config),
        "decisions": merged,
    }


def write_run_files(
    output_dir: PathLike,
    config: Mapping[str, Any],
    mode: str,
    seed: Optional[int] = None,
    decisions: Optional[Mapping[str, Any]] = None,
) -> Dict[str, Path]:
    """Write config.yaml (reloadable with --config) and manifest.yaml."""
    output_dir = Path(output_dir)
    return {
        "config": write_structured_file(config, output_dir / "config.yaml"),
        "manifest": write_structured_file(
            build_manifest(config, mode, seed, decisions), output_dir / "manifest.yaml"
        ),
    }
