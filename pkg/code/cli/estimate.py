"""
estimate: matching, odds weighting, PENCOMP and marginal-odds estimates of the ETT.
"""

from typing import Callable, List

import numpy as np

from config import RunConfig
from effects import EffectEstimate, marginal_odds_difference, matched_difference, odds_weighting, pencomp
from mepscore_types import ExitCode, format_cell_key
from utils.exceptions import DataError
from utils.file_utils import write_estimates
from utils.logging import get_logger

from .common import finish, match_all, output_dir, score_dataset

logger = get_logger(__name__)


def _attempt(estimates: List[EffectEstimate], label: str, compute: Callable[[], EffectEstimate]) -> None:
    try:
        estimates.append(compute())
    except DataError as e:
        logger.warning("estimate_skipped", estimate=label, reason=str(e))


def run(config: RunConfig) -> ExitCode:
    data = score_dataset(config)
    out = output_dir(config)
    dataset = data.dataset

    outcomes = dataset.outcome_matrix()
    keys = [k for j, k in enumerate(dataset.cell_keys) if np.isfinite(outcomes[:, j]).any()]
    if not keys:
        raise DataError("no outcome values (y_<subgroup>_<assessment> columns) in the input")

    results = match_all(config, data)
    estimates: List[EffectEstimate] = []
    for key in keys:
        label = format_cell_key(key)
        for kind, ps in data.scores.items():
            result = results[kind]
            _attempt(estimates, f"matching/{kind}/{label}", lambda: matched_difference(result, dataset, key, kind))
            _attempt(estimates, f"weighting/{kind}/{label}", lambda: odds_weighting(ps, dataset, key))
            if config.unnormalized:
                _attempt(
                    estimates,
                    f"weighting_unnormalized/{kind}/{label}",
                    lambda: odds_weighting(ps, dataset, key, normalized=False),
                )
            _attempt(
                estimates,
                f"pencomp/{kind}/{label}",
                lambda: pencomp(ps, dataset, key, max_knots=config.pencomp_max_knots),
            )
        _attempt(estimates, f"marginal_odds/{label}", lambda: marginal_odds_difference(dataset, key))

    if not estimates:
        raise DataError("no estimate could be computed")
    write_estimates(estimates, out / "estimates.csv")

    finish(
        config,
        {
            "caliper": config.caliper,
            "weighting_normalization": "normalized" + (" and unnormalized" if config.unnormalized else ""),
        },
    )
    return ExitCode.SUCCESS
