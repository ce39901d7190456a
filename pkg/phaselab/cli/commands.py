import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from phaselab.cli.config_file import dump_config, load_config
from phaselab.cli.experiments import list_experiments
from phaselab.cli.runner import run
from phaselab.config import settings
from phaselab.errors import LabError

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phaselab",
        description=f"{settings.APP_NAME} {settings.APP_VERSION}: nonlocal phase-transition experiments",
    )
    parser.add_argument("--output-dir", type=Path, default=None, help="Directory for CSV tables and manifests")
    parser.add_argument("--seed", type=int, default=None, help="Override the seed of the config")
    parser.add_argument("--threads", type=int, default=None, help="joblib workers (0 = all cores)")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL, help="Logging level")

    sub = parser.add_subparsers(dest="command", required=True)
    run_cmd = sub.add_parser("run", help="Run one experiment config")
    run_cmd.add_argument("config", type=Path)
    list_cmd = sub.add_parser("list", help="List the available experiments")
    list_cmd.add_argument("--machine", action="store_true", help="One tab-separated line per experiment")
    validate_cmd = sub.add_parser("validate", help="Validate a config and print it fully resolved")
    validate_cmd.add_argument("config", type=Path)
    return parser


def dispatch(args: argparse.Namespace) -> int:
    if args.command == "list":
        print(list_experiments(machine=args.machine))
        return 0

    try:
        config = load_config(args.config)
    except LabError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code

    if args.command == "validate":
        print(dump_config(config), end="")
        return 0
    if args.threads is not None and args.threads < 0:
        print("error: --threads must be >= 0", file=sys.stderr)
        return 2
    return run(config, output_dir=args.output_dir, seed=args.seed, threads=args.threads)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.getLogger().setLevel(args.log_level.upper())
    return dispatch(args)
