"""
Default values and environment variable mappings for mepscore.

This module provides:
- ARGUMENT_DEFAULTS: Fallback values for all configuration fields
- build_env_vars(): Environment variable integration (MEPSCORE_* prefix)

CLI parsing itself is generated by dataclass-args from the RunConfig
annotations; this module only feeds the lower layers of the precedence chain.
"""

from os import environ
from typing import Any, Dict, Mapping, Optional

from utils.logging import get_logger

logger = get_logger(__name__)

ENV_PREFIX = "MEPSCORE_"


# ============================================================================
# Default Values (Fallback Only)
# ============================================================================

ARGUMENT_DEFAULTS: Dict[str, Any] = {
    # Common
    "mode": None,
    "input": None,
    "output_dir": "mepscore-out",
    "ps_kinds": "ml,rc,naive",
    "verbose": False,
    "log_file": None,
    # Measurement model
    "csem_dir": None,
    # Matching and estimation
    "caliper": 1.0,
    "max_controls": 5,
    "max_treated": None,
    "unnormalized": False,
    "pencomp_max_knots": 20,
    # Simulation
    "design": "mixed",
    "reps": 200,
    "seed": 7,
    "workers": 1,
    "n_schools": 500,
    "calipers": "0.5,0.7,1.0",
    "effect_amplitude": None,
    "mask_fraction": 0.0,
    "figure_caliper": None,
}

_INT_KEYS = {"max_controls", "max_treated", "pencomp_max_knots", "reps", "seed", "workers", "n_schools"}
_FLOAT_KEYS = {"caliper", "effect_amplitude", "mask_fraction", "figure_caliper"}
_BOOL_KEYS = {"verbose", "unnormalized"}


# ============================================================================
# Environment Variable Integration
# ============================================================================


def _convert(key: str, value: str) -> Any:
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    if key in _BOOL_KEYS:
        return value.lower() in ("true", "1", "yes", "on")
    return value


def build_env_vars(env: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    """
    Collect MEPSCORE_<KEY> overrides for every known configuration key.

    Only variables that are set are included; values are converted to the
    field's type. Values that do not convert are skipped with a warning.
    """
    env = environ if env is None else env
    overrides = {}
    for key in ARGUMENT_DEFAULTS:
        value = env.get(f"{ENV_PREFIX}{key.upper()}")
        if value is None:
            continue
        try:
            overrides[key] = _convert(key, value)
        except ValueError:
            logger.warning("invalid_environment_value", variable=f"{ENV_PREFIX}{key.upper()}", value=value)
    return overrides

