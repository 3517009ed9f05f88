"""
match: optimal full matching per propensity score kind.
"""

import pandas as pd

from config import RunConfig
from matching import summarize_match
from mepscore_types import ExitCode
from utils.file_utils import write_matched_sets, write_table

from .common import finish, match_all, output_dir, score_dataset


def run(config: RunConfig) -> ExitCode:
    data = score_dataset(config)
    out = output_dir(config)
    results = match_all(config, data)

    rows = []
    for kind, result in results.items():
        write_matched_sets(result, out / f"matched_sets_{kind}.csv")
        rows.append({"kind": kind, **summarize_match(result, data.n_treated)})
    write_table(pd.DataFrame(rows), out / "match_summary.csv")

    finish(config, {"caliper": config.caliper, "max_treated_per_control": config.max_treated or data.n_treated})
    return ExitCode.SUCCESS
