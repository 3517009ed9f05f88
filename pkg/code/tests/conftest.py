"""
Shared pytest fixtures and configuration for mepscore tests.
"""

import sys
from pathlib import Path

import pytest

# Add code directory to sys.path so imports work
code_dir = Path(__file__).parent.parent
if str(code_dir) not in sys.path:
    sys.path.insert(0, str(code_dir))


# ============================================================================
# Path Fixtures
# ============================================================================


@pytest.fixture
def test_data_dir():
    """Return path to test fixtures directory."""
    return Path(__file__).parent / "fixtures"


@pytest.fixture
def sample_csv(test_data_dir):
    """Small school CSV with two subgroups on one assessment."""
    return test_data_dir / "schools" / "sample.csv"


@pytest.fixture
def csem_dir(test_data_dir):
    """Directory holding one CSEM table per assessment."""
    return test_data_dir / "csem"


# ============================================================================
# Data Model Fixtures
# ============================================================================


@pytest.fixture
def make_dataset():
    """
    Factory for small datasets.

    Each row is (school_id, treatment, covariates, cells) where cells maps a
    (subgroup, assessment) key to (size, obtained, csem, outcome).
    """
    from mepscore_types import Dataset, SchoolRecord, SubgroupCell

    def build(rows, covariate_names=(), cell_keys=None):
        keys = []
        records = []
        for school_id, treatment, covariates, cells in rows:
            built = []
            for key, (size, obtained, csem, outcome) in cells.items():
                if key not in keys:
                    keys.append(key)
                built.append(SubgroupCell(key[0], key[1], size, obtained, csem, outcome))
            records.append(SchoolRecord(school_id, treatment, tuple(covariates), tuple(built)))
        return Dataset(tuple(records), tuple(covariate_names), tuple(cell_keys or keys))

    return build


@pytest.fixture
def outcome_dataset(make_dataset):
    """
    Factory for datasets that only carry treatment and one outcome cell.

    ``units`` is a sequence of (school_id, treatment, outcome); an outcome of
    None leaves the cell without an outcome.
    """
    key = ("all", "y")

    def build(units):
        rows = [(sid, t, (), {key: (10, 0.0, 1.0, y)}) for sid, t, y in units]
        return make_dataset(rows, cell_keys=[key])

    return build


@pytest.fixture
def make_ps():
    """Factory for a PsFit with given per-school logits."""
    import numpy as np
    from scipy.special import expit

    from models.propensity import FitInfo, PsFit

    def build(logits, kind="naive"):
        ids = tuple(logits)
        values = np.array([logits[sid] for sid in ids], dtype=float)
        return PsFit(
            kind=kind,
            beta0=0.0,
            beta_w=(),
            beta_z=(),
            cell_keys=(),
            covariate_names=(),
            school_ids=ids,
            probability=expit(values),
            logit=values,
            fit_info=FitInfo(0.0, 0, True, False, len(ids)),
        )

    return build


# ============================================================================
# Simulation Fixtures
# ============================================================================


@pytest.fixture
def small_sim_config():
    """Fast simulation settings with a fixed effect amplitude."""
    from simulation import SimConfig

    return SimConfig(
        n_schools=200,
        n_replications=3,
        calipers=(0.5, 1.0),
        effect_amplitude=25.0,
        calibration_cells=20_000,
        pencomp_max_knots=8,
    )


@pytest.fixture
def sim_population(small_sim_config):
    """One generated population (seeded)."""
    from simulation import generate_population

    return generate_population(small_sim_config, seed=11)


# ============================================================================
# Environment Fixtures
# ============================================================================


@pytest.fixture
def clean_env(monkeypatch):
    """Provide clean environment without mepscore-specific vars."""
    import os

    for var in list(os.environ):
        if var.startswith("MEPSCORE_"):
            monkeypatch.delenv(var, raising=False)
    return monkeypatch


# ============================================================================
# Configuration for pytest
# ============================================================================


def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line("markers", "unit: Unit tests (fast, isolated)")
    config.addinivalue_line("markers", "integration: Integration tests")
    config.addinivalue_line("markers", "slow: Full-size simulation and grid checks")
