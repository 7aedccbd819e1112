#!/usr/bin/env python3
"""
Launcher for the SFPE solver CLI.

Usage: python main.py <command> [options]; see `python main.py --help`.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from src.main import main

if __name__ == "__main__":
    sys.exit(main())
