#!/usr/bin/env python3
"""
Superoptimal Solver Application Entry Point
Runs the batch solver on a symbol file and writes the report and profile outputs
"""

import sys
import os
import logging

# Add the current directory to Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from superopt.api.cli_report import build_parser, main as run_report
from superopt.core.errors import SymbolFormatError


def setup_logging(debug=False, log_file=None):
    """Set up logging configuration"""
    level = logging.DEBUG if debug else logging.INFO
    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers
    )


def main(argv=None):
    """Main application entry point"""
    try:
        args = build_parser().parse_args(argv)
    except SymbolFormatError as e:
        print(f"usage error: {e.message}", file=sys.stderr)
        return 1

    # Set up logging
    setup_logging(args.debug, args.log_file)
    logger = logging.getLogger(__name__)

    logger.info("Starting superoptimal solver")
    logger.info(f"Input: {args.input}")

    try:
        exit_code = run_report(args=args)
    except KeyboardInterrupt:
        logger.info("Run interrupted by user")
        exit_code = 130

    logger.info(f"Finished with exit code {exit_code}")
    return exit_code


if __name__ == '__main__':
    sys.exit(main())
