#!/usr/bin/env python3
"""
IBPLab Dependency Checker
Verifies the numerical stack is importable before running experiments.
"""

import platform
import sys
from typing import List, Tuple

DEPENDENCIES: List[Tuple[str, str]] = [
    ('numpy', 'numpy'),
    ('scipy', 'scipy'),
    ('matplotlib', 'matplotlib'),
    ('tqdm', 'tqdm'),
    ('psutil', 'psutil'),
]

TEST_DEPENDENCIES: List[Tuple[str, str]] = [
    ('pytest', 'pytest'),
    ('hypothesis', 'hypothesis'),
]


def missing_packages(dependencies=DEPENDENCIES) -> List[str]:
    missing = []
    for module_name, package_name in dependencies:
        try:
            __import__(module_name)
        except ImportError:
            missing.append(package_name)
    return missing


def check_dependencies(include_tests: bool = False, verbose: bool = True) -> bool:
    """
    Report which packages are importable.

    Args:
        include_tests: also check the test tooling
        verbose: print a line per package (to stderr)

    Returns:
        True if nothing is missing
    """
    dependencies = DEPENDENCIES + (TEST_DEPENDENCIES if include_tests else [])
    missing = missing_packages(dependencies)
    if verbose:
        out = sys.stderr
        print(f"Platform: {platform.system()} {platform.release()} ({platform.machine()})", file=out)
        print(f"Python: {platform.python_version()}", file=out)
        for _, package_name in dependencies:
            status = "MISSING" if package_name in missing else "ok"
            print(f"  {package_name}: {status}", file=out)
        if missing:
            print(f"{len(missing)} dependencies are missing; install with:", file=out)
            print("  pip install -r requirements.txt", file=out)
    return not missing


if __name__ == "__main__":
    success = check_dependencies(include_tests='--tests' in sys.argv)
    sys.exit(0 if success else 1)
