import argparse
import importlib
import json
import logging
import sys
import typing
from pathlib import Path

from voxtop import __version__, init_logging
from voxtop.utils.Config import load_config
from voxtop.utils.Constants import ExitCodes
from voxtop.utils.Errors import VoxtopError
from voxtop.utils.Provenance import write_provenance

COMMAND_MODULES = (
    "voxtop.commands.problems",
    "voxtop.commands.dataset",
    "voxtop.commands.network",
    "voxtop.commands.studies",
)


def common_options() -> argparse.ArgumentParser:
    """
    Flags shared by every subcommand
    """
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", type=Path, default=None, help="RunConfig JSON file")
    parent.add_argument("--seed", type=int, default=None, help="Base seed (unsigned 64-bit)")
    parent.add_argument("--out", type=Path, default=Path("voxtop_out"), help="Output directory")
    parent.add_argument(
        "--threads", type=int, default=None, help="Worker count (default: $TOPO_THREADS or 1)"
    )
    parent.add_argument("--progress", action="store_true", help="Show progress bars on stderr")
    parent.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxtop",
        description="Voxel SIMP topology optimization with a 3D CNN surrogate",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", metavar="command")

    parent = common_options()
    for name in COMMAND_MODULES:
        importlib.import_module(name).setup(subparsers, parent)

    return parser


def report_error(err: BaseException, code: int):
    print(
        json.dumps({"error": type(err).__name__, "message": str(err), "code": code}),
        file=sys.stderr,
    )


def main(argv: typing.Optional[typing.Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return ExitCodes.usage

    init_logging(args.out / "log", level=logging.DEBUG if args.verbose else logging.INFO)
    logging.info(f"voxtop {__version__}: '{args.command}' started with {argv}")
    try:
        config = load_config(args.config).with_seed(args.seed)
        config = args.handler(args, config)
        write_provenance(args.out, args.command, config.toJSON(), argv)
    except VoxtopError as e:
        logging.exception(f"'{args.command}' failed")
        report_error(e, e.exitcode)
        return e.exitcode
    except FileNotFoundError as e:
        logging.exception(f"'{args.command}' failed")
        report_error(e, ExitCodes.missing_input)
        return ExitCodes.missing_input
    except Exception as e:
        logging.exception(f"'{args.command}' failed")
        report_error(e, ExitCodes.failure)
        return ExitCodes.failure

    logging.info(f"'{args.command}' finished, artifacts in '{args.out}'")
    return ExitCodes.ok


if __name__ == "__main__":
    sys.exit(main())
