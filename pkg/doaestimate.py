#! /usr/bin/env python
"""
Estimate source angles from array snapshots.

    python doaestimate.py [options]    same as: robustscatter doa [options]

See changelog in robustscatter/__about__.py
"""

import sys
from robustscatter.cli import main_cli

if __name__ == "__main__":
    sys.exit(main_cli(["doa"] + sys.argv[1:]))
