#!/usr/bin/env python3
"""sdtransit entry point.

Usage: python main.py {validate|filter|assess|evaluate|simulate|sweep|report} [flags]
"""
import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
