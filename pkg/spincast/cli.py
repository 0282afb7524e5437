"""Command-line entry point: spincast <recipe> --config <path> [--out <path>] [--set key=value ...]"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .config import CONFIG_DIR_ENV, RECIPES
from .core.errors import ConfigError, DomainError, FitError, ResultFileError
from .core.parsers import load_config
from .recipes import run_recipe
from .utils.results import read_result, result_text
from .utils.templates import create_config_template
from .utils.verification import DEFAULT_ATOL, DEFAULT_RTOL, verify_against_golden

logger = logging.getLogger("spincast.cli")

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2


def setup_logging(level: int = logging.INFO, log_dir: Optional[Path] = None) -> None:
    handlers = [logging.StreamHandler(sys.stderr)]
    if log_dir:
        log_dir.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_dir / "spincast.log", encoding="utf-8"))
    logging.basicConfig(
        level=level,
        format="%(asctime)s | %(levelname)-9s | %(name)s | %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        handlers=handlers,
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spincast",
        description="Spin photodynamics simulations and fits for G-center ensembles",
        epilog=f"Relative --config paths fall back to ${CONFIG_DIR_ENV}.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=RECIPES + ["init-config"], help="recipe to run, or init-config")
    parser.add_argument("--config", "-c", default=None, help="YAML config file")
    parser.add_argument("--out", "-o", default=None, help="result file (stdout when omitted)")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config entry, e.g. --set zfs.E=500",
    )
    parser.add_argument("--workers", type=int, default=None, help="worker processes for sweeps")
    parser.add_argument("--fit-json", action="store_true", help="also write fit results as JSON")
    parser.add_argument("--compare", default=None, metavar="GOLDEN", help="compare against a stored result")
    parser.add_argument("--rtol", type=float, default=DEFAULT_RTOL, help="relative tolerance for --compare")
    parser.add_argument("--atol", type=float, default=DEFAULT_ATOL, help="absolute tolerance for --compare")
    parser.add_argument("--log-dir", type=Path, default=None, help="also log to <dir>/spincast.log")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    return parser


def _init_config(out: Optional[str]) -> int:
    text = create_config_template()
    if out:
        path = Path(out)
        if path.exists():
            logger.error("Refusing to overwrite %s", path)
            return EXIT_USAGE
        path.write_text(text, encoding="utf-8")
        logger.info("Wrote config template to %s", path)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def run(args: argparse.Namespace) -> int:
    if args.command == "init-config":
        return _init_config(args.out)

    overrides = list(args.overrides)
    if args.workers is not None:
        overrides.append(f"workers={args.workers}")
    if args.fit_json:
        overrides.append("output.fit_json=true")
    config = load_config(args.config, overrides)

    result = run_recipe(args.command, config, out=args.out)
    if not (args.out or config.get("output.path")):
        sys.stdout.write(result_text(result))

    status = EXIT_OK
    if args.command == "fit":
        failed = [name for name, fit in result.metadata["fits"].items() if not fit["converged"]]
        if failed:
            logger.error("Fit did not converge: %s", ", ".join(failed))
            status = EXIT_NUMERICAL

    if args.compare:
        matched, table = verify_against_golden(result, read_result(args.compare), args.rtol, args.atol)
        logger.info("Comparison against %s:\n%s", args.compare, table.to_string(index=False))
        if not matched:
            logger.error("Result deviates from %s", args.compare)
            status = EXIT_NUMERICAL
    return status


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    setup_logging(level, args.log_dir)

    try:
        return run(args)
    except ConfigError as exc:
        logger.error("Configuration error: %s", exc)
        return EXIT_USAGE
    except (DomainError, FitError, ResultFileError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
