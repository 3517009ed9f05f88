"""
balance: standardized differences on obtained averages and EB predictions.
"""

from config import RunConfig
from diagnostics import balance_overview, balance_report
from matching import match_weights
from mepscore_types import ExitCode
from utils.file_utils import write_table

from .common import finish, match_all, output_dir, score_dataset


def run(config: RunConfig) -> ExitCode:
    data = score_dataset(config, need_eb=True)
    out = output_dir(config)
    dataset = data.dataset
    results = match_all(config, data)

    keys = dataset.cell_keys
    observed, _ = dataset.obtained_matrix(keys)
    report = balance_report(
        {"W": observed, "Xhat": data.eb.matrix(keys)},
        dataset.treatment_vector(),
        {f"matched_{kind}": match_weights(result, dataset.school_ids) for kind, result in results.items()},
        keys,
    )
    write_table(report.to_records(), out / "balance.csv")
    write_table([row._asdict() for row in balance_overview(report)], out / "balance_overview.csv")

    finish(config, {"d_s_denominator": report.denominator_rule, "caliper": config.caliper})
    return ExitCode.SUCCESS
