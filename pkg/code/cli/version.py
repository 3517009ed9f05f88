"""
mepscore version subcommand.
"""

import sys
from importlib import metadata

from utils.manifest import LIBRARIES, package_version

CORE_PACKAGES = ("profile-config", "dataclass-args", "envlog", "pyyaml") + LIBRARIES


def main() -> int:
    """Print the package version and the versions of its dependencies."""
    print(f"mepscore version: {package_version()}")
    print()
    print("Dependencies:")
    for package in CORE_PACKAGES:
        try:
            print(f"  {package}: {metadata.version(package)}")
        except metadata.PackageNotFoundError:
            print(f"  {package}: not installed")
    print()
    print(f"Python: {sys.version.split()[0]}")
    return 0
