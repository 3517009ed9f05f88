"""
mepscore run configuration.

RunConfig is the single source of truth for every run setting. Its
dataclass-args annotations generate the command line; the factory layers
defaults, profile files, MEPSCORE_* variables and ``--config`` files under
the flags.

Field order determines --help output order: common options first, then
grouped by mode.
"""

from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Tuple

from dataclass_args import cli_choices, cli_exclude, cli_help, cli_short, combine_annotations

from mepscore_types import PS_KINDS

MODES = ("simulate", "fit-ps", "match", "balance", "estimate", "approx-check")
DATA_MODES = ("fit-ps", "match", "balance", "estimate")


def _comma_list(text: str) -> List[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


@dataclass
class RunConfig:
    """mepscore - propensity scores under error-prone group averages

    Fit propensity scores that account for measurement error in school
    subgroup averages, match on them, check balance and estimate effects,
    or run the Monte Carlo study.
    """

    # ========================================================================
    # Common Options
    # ========================================================================

    mode: Optional[str] = combine_annotations(
        cli_choices(list(MODES)),
        cli_help("What to run (may also be given as the first positional word)"),
        default=None,
    )

    input: Optional[str] = combine_annotations(
        cli_short("i"),
        cli_help("School CSV (school_id, treatment, z_*, m_/w_/csem_/y_<subgroup>_<assessment>)"),
        default=None,
    )

    output_dir: str = combine_annotations(
        cli_short("o"),
        cli_help("Directory for result tables, figures, config.yaml and manifest.yaml"),
        default="mepscore-out",
    )

    ps_kinds: str = combine_annotations(
        cli_short("k"),
        cli_help("Comma-separated propensity score kinds (ml, rc, naive)"),
        default="ml,rc,naive",
    )

    verbose: bool = combine_annotations(
        cli_short("v"),
        cli_help("Debug logging and full tracebacks on the console"),
        default=False,
    )

    log_file: Optional[str] = cli_help(
        "Log file (default ~/.mepscore/mepscore.log)", default=None
    )

    # ========================================================================
    # Measurement model
    # ========================================================================

    csem_dir: Optional[str] = cli_help(
        "Directory of <assessment>.csv CSEM tables (score, csem); enables two-pass HLM fitting",
        default=None,
    )

    # ========================================================================
    # Matching and estimation
    # ========================================================================

    caliper: float = combine_annotations(
        cli_short("c"),
        cli_help("Caliper on the propensity score logit scale"),
        default=1.0,
    )

    max_controls: int = cli_help("Most controls matched to one treated school", default=5)

    max_treated: Optional[int] = cli_help(
        "Most treated schools matched to one control (default: number of treated)",
        default=None,
    )

    unnormalized: bool = cli_help(
        "Also report the unnormalized odds-weighting estimator", default=False
    )

    pencomp_max_knots: int = cli_help("Most spline knots for PENCOMP", default=20)

    # ========================================================================
    # Simulation
    # ========================================================================

    design: str = combine_annotations(
        cli_choices(["mixed", "all-large"]),
        cli_help("Subgroup size design"),
        default="mixed",
    )

    reps: int = combine_annotations(
        cli_short("r"), cli_help("Number of replications"), default=200
    )

    seed: int = combine_annotations(cli_short("s"), cli_help("Master seed"), default=7)

    workers: int = combine_annotations(
        cli_short("w"), cli_help("Worker processes for replications"), default=1
    )

    n_schools: int = cli_help("Schools per simulated population", default=500)

    calipers: str = cli_help("Comma-separated study calipers", default="0.5,0.7,1.0")

    effect_amplitude: Optional[float] = cli_help(
        "Effect amplitude a in a*exp(-X/1000) (default: calibrate to the target ETT)",
        default=None,
    )

    mask_fraction: float = cli_help(
        "Fraction of simulated cells withheld before fitting", default=0.0
    )

    figure_caliper: Optional[float] = cli_help(
        "Caliper used for balance figures (default: widest study caliper)", default=None
    )

    # ========================================================================
    # Internal Fields (not exposed to CLI)
    # ========================================================================

    profile: str = cli_exclude(default="default")

    # ------------------------------------------------------------------

    def kinds(self) -> Tuple[str, ...]:
        return tuple(_comma_list(self.ps_kinds))

    def caliper_values(self) -> Tuple[float, ...]:
        return tuple(float(c) for c in _comma_list(self.calipers))

    @property
    def needs_input(self) -> bool:
        return self.mode in DATA_MODES

    def as_dict(self) -> Dict[str, Any]:
        """Everything a rerun needs, loadable again with ``--config``."""
        data = asdict(self)
        data.pop("profile", None)
        return data


def unknown_kinds(kinds: Tuple[str, ...]) -> List[str]:
    return [k for k in kinds if k not in PS_KINDS]
