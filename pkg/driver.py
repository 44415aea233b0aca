import os
import sys
import logging
import argparse

from dotenv import load_dotenv

from experiment_cli import ExperimentAgent

SUBCOMMANDS = ("run", "compare", "sweep", "estimate", "snapshot-to-pgm")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="driver.py",
        description="Phase-space laboratory: Wigner/Liouville evolution, decoherence and correspondence timescales.",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    for name, text in (
        ("run", "evolve one configured field"),
        ("compare", "paired Moyal and Liouville runs from the same initial field"),
        ("sweep", "run a parameter sweep and fit its scaling law"),
        ("estimate", "closed-form timescales for a scenario file"),
    ):
        command = commands.add_parser(name, help=text)
        command.add_argument("--config", required=True, help="YAML config file")
        command.add_argument("--out", default=None, help="output directory (default PHASELAB_OUT_DIR)")
        command.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS, help="debug logging")
        if name == "sweep":
            command.add_argument("--parallel", type=int, default=None, help="worker processes (default PHASELAB_PARALLEL)")

    command = commands.add_parser("snapshot-to-pgm", help="convert a field snapshot to a 16-bit PGM heatmap")
    command.add_argument("snapshot", help="snapshot .bin file (its .json sidecar must sit next to it)")
    command.add_argument("--out", default=None, help="output .pgm path")
    command.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS, help="debug logging")
    return parser


def configure_logging(verbose):
    level = logging.DEBUG if verbose else getattr(logging, os.environ.get("PHASELAB_LOG_LEVEL", "WARNING").upper(), logging.WARNING)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def generate_task(args):
    """Translate parsed arguments into an ExperimentAgent task."""
    if args.command == "snapshot-to-pgm":
        return {"operation": "snapshot_to_pgm", "args": {"snapshot": args.snapshot, "out": args.out}}
    task_args = {"config_path": args.config, "out_dir": args.out}
    if args.command == "sweep":
        task_args["parallel"] = args.parallel
    return {"operation": args.command, "args": task_args}


def main(argv=None):
    load_dotenv()  # Load environment variables from .env file
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)

    agent = ExperimentAgent(out_dir=getattr(args, "out", None) if args.command != "snapshot-to-pgm" else None)
    response = agent.execute_task(generate_task(args))

    if response["status"] == "success":
        print(response["message"])
    elif response["status"] == "partial":
        print(f"Partial results: {response['message']}")
    else:
        print(f"Error: {response['message']}", file=sys.stderr)
    return response["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
