"""
mepscore - propensity scores under error-prone group averages

Entry point: resolves the configuration, runs one mode and maps any failure
onto the exit code contract (0 success, 1 usage, 2 data, 3 numerical,
130 interrupted).
"""

import sys
from typing import List, Optional

# Configure logging early (before the configuration is known)
from utils.logging import configure_logging, default_log_path, get_logger  # noqa: E402

configure_logging(default_log_path())

logger = get_logger(__name__)

from cli import run  # noqa: E402
from config import parse_config  # noqa: E402
from mepscore_types import ExitCode  # noqa: E402
from utils.exceptions import exit_code_for, log_exception  # noqa: E402


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run mepscore and return the process exit code.

    ``mepscore version`` is handled before configuration parsing.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "version":
        from cli.version import main as version_main

        return version_main()

    try:
        config = parse_config(argv)
        configure_logging(config.log_file or default_log_path(), verbose=config.verbose)
        return int(run(config))
    except KeyboardInterrupt:
        logger.info("interrupted_by_user")
        return int(ExitCode.USER_INTERRUPT)
    except SystemExit as e:
        code = 0 if e.code is None else e.code
        return code if isinstance(code, int) else int(ExitCode.USAGE_ERROR)
    except Exception as e:
        log_exception(logger, "fatal_error", e)
        return int(exit_code_for(e))


if __name__ == "__main__":
    sys.exit(main())
