#!/usr/bin/env python3
"""
respscope command line entry point
Usage: python run_cli.py <extract|train|eval|embed|report|selfcheck> ...
"""

import sys
from pathlib import Path

# Add backend to the Python path so `src` imports resolve
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from src.cli.main import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
