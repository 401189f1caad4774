#! /usr/bin/env python
"""
Check a weight function numerically.

    python validateweights.py [options]    same as: robustscatter validate-weights [options]

See changelog in robustscatter/__about__.py
"""

import sys
from robustscatter.cli import main_cli

if __name__ == "__main__":
    sys.exit(main_cli(["validate-weights"] + sys.argv[1:]))
