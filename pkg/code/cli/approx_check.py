"""
approx-check: mixture approximation against quadrature on the standard grid.

Exits 0 when the worst error is within the frozen tolerance, 3 otherwise.
"""

import pandas as pd

from config import RunConfig
from mepscore_types import ExitCode
from models import FROZEN_APPROXIMATION_TOLERANCE, approximation_grid
from utils.file_utils import write_structured_file, write_table
from utils.logging import get_logger

from .common import finish, output_dir

logger = get_logger(__name__)


def run(config: RunConfig) -> ExitCode:
    grid = approximation_grid()
    out = output_dir(config)

    frame = pd.DataFrame(
        {
            "eta": grid.eta,
            "variance": grid.variance,
            "mixture": grid.mixture,
            "oracle": grid.oracle,
            "abs_error": grid.abs_error,
        }
    )
    write_table(frame, out / "approx_grid.csv")

    worst_eta, worst_variance = grid.worst_point
    passed = grid.within(FROZEN_APPROXIMATION_TOLERANCE)
    write_structured_file(
        {
            "max_error": grid.max_error,
            "worst_eta": worst_eta,
            "worst_variance": worst_variance,
            "tolerance": FROZEN_APPROXIMATION_TOLERANCE,
            "points": int(grid.eta.size),
            "passed": bool(passed),
        },
        out / "approx_check.yaml",
    )
    finish(config)

    if not passed:
        logger.error("approximation_out_of_tolerance", max_error=grid.max_error, tolerance=FROZEN_APPROXIMATION_TOLERANCE)
        return ExitCode.NUMERICAL_ERROR
    return ExitCode.SUCCESS
