#! /usr/bin/env python
"""
Run a Monte Carlo experiment.

    python experiment.py [options]    same as: robustscatter run [options]

See changelog in robustscatter/__about__.py
"""

import sys
from robustscatter.cli import main_cli

if __name__ == "__main__":
    sys.exit(main_cli(["run"] + sys.argv[1:]))
