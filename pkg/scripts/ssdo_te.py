#!/usr/bin/env python3
"""
Development wrapper for the ssdo-te command line.

Usage:
    ./scripts/ssdo_te.py gen --complete 3 --capacity 2 --paths-per-pair 2 --demands manual:fig2 -o fig2/
    ./scripts/ssdo_te.py solve --topology fig2/topology.json --paths fig2/paths.json --demands fig2/demands.csv
"""

import sys
from pathlib import Path

# Add src/ to path for development mode (allows running without installation)
src_path = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_path))

from ssdo_te.cli import main


if __name__ == "__main__":
    sys.exit(main())
