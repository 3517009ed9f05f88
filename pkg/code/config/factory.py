"""
Configuration factory for mepscore using dataclass-args with base_configs.

Precedence (lowest to highest):
1. ARGUMENT_DEFAULTS (fallback values)
2. Profile file values (from profile-config, .mepscore/config.yaml)
3. Environment variables (MEPSCORE_*)
4. --config CLI argument (user-specified config file)
5. CLI arguments (highest precedence)

profile-config resolves the profile and environment layers; dataclass-args
handles ``--config`` and the flags via its base_configs parameter.
"""

import argparse
import os
from dataclasses import fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from dataclass_args import build_config
from profile_config import ProfileConfigResolver
from profile_config.exceptions import ConfigNotFoundError, ProfileNotFoundError

from utils.exceptions import UsageError
from utils.logging import get_logger

from .arguments import ARGUMENT_DEFAULTS, build_env_vars
from .dataclass import MODES, RunConfig, unknown_kinds

logger = get_logger(__name__)

PROFILE_CONFIG_NAME = ".mepscore"
PROFILE_CONFIG_PROFILE_FILE_NAME = "config"
PROFILE_ENV_VAR = "MEPSCORE_PROFILE"
PROG_NAME = "mepscore"

_META_FLAGS_WITH_VALUE = ("--profile",)


def config_keys() -> List[str]:
    return [f.name for f in fields(RunConfig) if f.name != "profile"]


def normalize_argv(argv: Sequence[str]) -> List[str]:
    """Turn a leading positional mode (``mepscore simulate ...``) into ``--mode simulate``."""
    argv = list(argv)
    if argv and argv[0] in MODES:
        return ["--mode", argv[0]] + argv[1:]
    return argv


def _parse_meta_args(argv: Sequence[str]) -> Tuple[str, List[str]]:
    """
    Split off the meta-arguments that are not RunConfig fields.

    Returns:
        Tuple of (profile_name, remaining_argv)
    """
    meta_parser = argparse.ArgumentParser(add_help=False)
    meta_parser.add_argument("--profile", type=str, default=None)
    meta_args, _ = meta_parser.parse_known_args(list(argv))
    profile_name = meta_args.profile or os.environ.get(PROFILE_ENV_VAR, "default")

    remaining = []
    skip_next = False
    for arg in argv:
        if skip_next:
            skip_next = False
            continue
        if arg in _META_FLAGS_WITH_VALUE:
            skip_next = True
            continue
        if any(arg.startswith(flag + "=") for flag in _META_FLAGS_WITH_VALUE):
            continue
        remaining.append(arg)
    return profile_name, remaining


def check_known_keys(values: Dict[str, Any], source: str) -> None:
    """
    Raises:
        UsageError: ``values`` holds keys that are not configuration fields
    """
    unknown = sorted(set(values) - set(config_keys()))
    if unknown:
        raise UsageError(f"unknown configuration key(s) in {source}: {', '.join(unknown)}")


def resolve_profile_and_env(profile_name: str, env: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """
    Resolve configuration from the profile file and environment variables.

    Returns a dictionary with precedence DEFAULTS < PROFILE < ENVVARS.

    Raises:
        UsageError: The named profile does not exist, or the profile file
            holds unknown keys
    """
    env_vars = build_env_vars() if env is None else env
    try:
        resolver = ProfileConfigResolver(
            config_name=PROFILE_CONFIG_NAME,
            profile_filename=PROFILE_CONFIG_PROFILE_FILE_NAME,
            profile=profile_name,
            extensions=["yaml", "yml"],
            search_home=True,
        )
        profile_config = resolver.resolve()
        check_known_keys(profile_config, f"profile {profile_name!r}")
        logger.info("profile_resolved", profile=profile_name)
    except ConfigNotFoundError:
        logger.debug("no_config_file_found_using_defaults")
        profile_config = {}
    except ProfileNotFoundError:
        raise UsageError(f"profile not found: {profile_name}") from None

    merged = dict(ARGUMENT_DEFAULTS)
    merged.update(profile_config)
    merged.update(env_vars)
    if env_vars:
        logger.debug("environment_variables_added", count=len(env_vars))
    return merged


def validate_config(config: RunConfig) -> RunConfig:
    """
    Check cross-field rules and that referenced paths exist.

    Raises:
        UsageError: On any violation
    """
    if config.mode is None:
        raise UsageError(f"no mode given; choose one of: {', '.join(MODES)}")
    if config.mode not in MODES:
        raise UsageError(f"unknown mode {config.mode!r}")

    kinds = config.kinds()
    bad = unknown_kinds(kinds)
    if bad or not kinds:
        raise UsageError(f"unknown propensity score kind(s): {', '.join(bad) or '(none given)'}")

    if config.needs_input:
        if not config.input:
            raise UsageError(f"mode {config.mode} needs --input")
        if not Path(config.input).is_file():
            raise UsageError(f"input file not found: {config.input}")
    if config.csem_dir and not Path(config.csem_dir).is_dir():
        raise UsageError(f"CSEM directory not found: {config.csem_dir}")

    if not config.caliper > 0:
        raise UsageError("--caliper must be positive")
    if config.max_controls < 1 or (config.max_treated is not None and config.max_treated < 1):
        raise UsageError("matching ratio bounds must be at least 1")
    if config.workers < 1:
        raise UsageError("--workers must be at least 1")
    if config.mode == "simulate":
        if config.reps < 2:
            raise UsageError("--reps must be at least 2")
        try:
            calipers = config.caliper_values()
        except ValueError:
            raise UsageError(f"--calipers must be a comma list of numbers, got {config.calipers!r}") from None
        if not calipers or min(calipers) <= 0:
            raise UsageError("--calipers must be positive")
    return config


def parse_config(argv: Optional[Sequence[str]] = None) -> RunConfig:
    """
    Build the RunConfig for this invocation.

    Raises:
        UsageError: Invalid flags, unknown keys, missing files
        SystemExit: --help (exit 0)
    """
    import sys

    argv = list(sys.argv[1:] if argv is None else argv)
    profile_name, argv = _parse_meta_args(normalize_argv(argv))
    base = resolve_profile_and_env(profile_name)

    original_argv0 = sys.argv[0] if sys.argv else PROG_NAME
    if sys.argv:
        sys.argv[0] = PROG_NAME
    try:
        config = build_config(RunConfig, args=argv, base_configs=base)
    except SystemExit as e:
        if e.code in (0, None):
            raise
        raise UsageError("invalid command line (see messages above)") from None
    finally:
        if sys.argv:
            sys.argv[0] = original_argv0

    config.profile = profile_name
    logger.debug("configuration_parsing_completed", mode=config.mode)
    return validate_config(config)
