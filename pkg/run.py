#!/usr/bin/env python3
"""Simple script to run the nonrecip scenario driver."""

import sys

from src.nonrecip.cli import main

if __name__ == "__main__":
    sys.exit(main())
