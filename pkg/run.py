"""
File: run.py
Description: Application entry point
"""

import sys

from dgkd import run_cli

if __name__ == '__main__':
    sys.exit(run_cli())
