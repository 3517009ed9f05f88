"""
fit-ps: propensity scores, coefficients and HLM fits.
"""

import pandas as pd

from config import RunConfig
from mepscore_types import ExitCode
from utils.file_utils import write_structured_file, write_table

from .common import finish, output_dir, score_dataset


def run(config: RunConfig) -> ExitCode:
    data = score_dataset(config)
    out = output_dir(config)

    rows = [
        {"school_id": sid, "ps_kind": kind, "probability": float(p), "logit": float(lg)}
        for kind, ps in data.scores.items()
        for sid, p, lg in zip(ps.school_ids, ps.probability, ps.logit)
    ]
    write_table(pd.DataFrame(rows, columns=["school_id", "ps_kind", "probability", "logit"]), out / "scores.csv")
    write_structured_file({kind: ps.coefficients() for kind, ps in data.scores.items()}, out / "coefficients.yaml")
    if data.fits:
        write_structured_file({a: fit.as_dict() for a, fit in data.fits.items()}, out / "hlm.yaml")

    finish(config, {"two_pass_hlm": bool(config.csem_dir)})
    return ExitCode.SUCCESS
