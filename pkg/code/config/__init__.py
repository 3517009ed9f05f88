"""
Configuration subsystem for mepscore.

Main entry points:
- parse_config(): Complete configuration parsing and resolution
- RunConfig: Configuration dataclass
"""

from .dataclass import MODES, RunConfig
from .factory import parse_config, validate_config

__all__ = ["MODES", "RunConfig", "parse_config", "validate_config"]
