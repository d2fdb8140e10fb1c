#!/usr/bin/env python3
"""
CLI entry point for adaptive finite element runs.

Usage:
    python3 tifiss.py run CONFIG.json [--out DIR] [--quiet] [--verbose]
    python3 tifiss.py compare A.csv B.csv

Examples:
    # Anisotropic diffusion case study, artifacts in ./results
    python3 tifiss.py run configs/example1.json --out results

    # Regression check of two convergence histories
    python3 tifiss.py compare results/history.csv baseline/history.csv
"""

import argparse
import logging
import os
import sys

from dotenv import load_dotenv

from src.main import compare, run

load_dotenv()

# Configure logging
logging.basicConfig(
    level=os.getenv("TIFISS_LOG_LEVEL", "INFO").upper(),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    handlers=[logging.StreamHandler(sys.stdout)],
)
logger = logging.getLogger(__name__)


def parse_args(argv=None):
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(description="Adaptive FEM and stochastic Galerkin FEM driver")
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="Execute a JSON run configuration")
    run_parser.add_argument("config", help="Path to the JSON configuration")
    run_parser.add_argument("--out", default=None, help="Artifact directory (default: TIFISS_OUTPUT_DIR)")
    run_parser.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    run_parser.add_argument("--verbose", action="store_true", help="Log debug output")

    compare_parser = commands.add_parser("compare", help="Compare two history.csv files")
    compare_parser.add_argument("first", help="First history.csv")
    compare_parser.add_argument("second", help="Second history.csv")
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    if getattr(args, "quiet", False):
        logging.getLogger().setLevel(logging.WARNING)
    if getattr(args, "verbose", False):
        logging.getLogger().setLevel(logging.DEBUG)

    if args.command == "run":
        return run(args.config, args.out)
    return compare(args.first, args.second)


if __name__ == "__main__":
    sys.exit(main())
