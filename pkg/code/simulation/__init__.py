"""
Simulation of school populations and the Monte Carlo study built on them.
"""

from .calibration import Calibration, calibrate_effect, monte_carlo_ett
from .population import LatentTruth, Population, generate_population, mask_cells
from .settings import SIM_ASSESSMENT, SimConfig, SizeLaw, size_laws, truncated_geometric_pmf
from .study import ReplicationRecord, StudyResult, run_replication, run_study

__all__ = [
    "Calibration",
    "LatentTruth",
    "Population",
    "ReplicationRecord",
    "SIM_ASSESSMENT",
    "SimConfig",
    "SizeLaw",
    "StudyResult",
    "calibrate_effect",
    "generate_population",
    "mask_cells",
    "monte_carlo_ett",
    "run_replication",
    "run_study",
    "size_laws",
    "truncated_geometric_pmf",
]
