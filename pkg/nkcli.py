import argparse
import sys
from enum import Enum

from loguru import logger
from pyfiglet import Figlet
from termcolor import cprint

from nkcert.certificate import failure_certificate, to_json
from nkcert.common import CheckFailure, InputError
from nkcert.pipeline import load_config, plot, run, write_atomic
from nkcert.salem import salem_table


CLI_VERSION = "1.0.0"

DEFAULT_FAILURE_PATH = "certificate.json"


class Command(str, Enum):
    VERIFY = "verify"
    PLOT = "plot"
    SALEM4 = "salem4"


class ExitCode(int, Enum):
    PASSED = 0
    CHECK_FAILED = 1
    INPUT_ERROR = 2


def main(argv=None) -> int:
    args = parse_args(argv)
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if args.verbose else "INFO")
    if not args.quiet:
        print_welcome()

    if args.command == Command.SALEM4:
        return salem4(args)

    overrides = {
        "window": args.window,
        "samples": args.samples,
        "seed": args.seed,
        "tol": args.tol,
    }
    if args.command == Command.PLOT:
        overrides["plot_out"] = args.out
        return plot_command(args.config, overrides)

    overrides["out"] = args.out
    return verify(args.config, overrides)


def parse_args(argv=None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="nkcli",
        description="Certify non-Kähler compact manifolds built from number fields.",
    )
    parser.add_argument("--version", action="version", version=CLI_VERSION)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="no banner")
    sub = parser.add_subparsers(dest="command", required=True)

    for command, text in (
        (Command.VERIFY, "run the pipeline and write a certificate"),
        (Command.PLOT, "draw the fan and fundamental domain (s = 2)"),
    ):
        p = sub.add_parser(command.value, help=text)
        p.add_argument("config", help="TOML run config")
        p.add_argument("--window", type=int, help="orbit enumeration window")
        p.add_argument("--samples", type=int, help="Monte-Carlo sample count")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--tol", type=float, help="check tolerance")
        p.add_argument("--out", help="output path")

    p = sub.add_parser(Command.SALEM4.value, help="list quartic Salem polynomials")
    p.add_argument("--q1-min", type=int, default=-10)
    p.add_argument("--q1-max", type=int, default=10)
    p.add_argument("--out", help="CSV output path")

    args = parser.parse_args(argv)
    args.command = Command(args.command)
    return args


def verify(path: str, overrides: dict) -> int:
    try:
        config = load_config(path, overrides)
    except InputError as e:
        logger.error(f"{type(e).__name__}: {e}")
        out = overrides.get("out") or DEFAULT_FAILURE_PATH
        write_atomic(out, to_json(failure_certificate(e)))
        return ExitCode.INPUT_ERROR

    cert, code = run(config)
    color = "green" if cert.status == "passed" else "red"
    cprint(f"Certificate {cert.status}: {config.output.certificate}", color)
    return code


def plot_command(path: str, overrides: dict) -> int:
    try:
        config = load_config(path, overrides)
        out = plot(config)
    except InputError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return ExitCode.INPUT_ERROR
    except CheckFailure as e:
        logger.error(f"{type(e).__name__}: {e}")
        return ExitCode.CHECK_FAILED
    cprint(f"Plot written to {out}", "green")
    return ExitCode.PASSED


def salem4(args: argparse.Namespace) -> int:
    if args.q1_min > args.q1_max:
        logger.error(f"Invalid q1 range [{args.q1_min}, {args.q1_max}]")
        return ExitCode.INPUT_ERROR
    df = salem_table(args.q1_min, args.q1_max)
    print(df.to_string(index=False))
    if args.out:
        write_atomic(args.out, df.to_csv(index=False))
    return ExitCode.PASSED


def print_welcome():
    cprint(Figlet(font="big").renderText("NKCERT"), "blue", file=sys.stderr)
    print(f"\nWelcome to nkcert CLI v{CLI_VERSION}!\n", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
