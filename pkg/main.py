import argparse
import importlib
import os
import sys
from typing import List, Optional

from treelab.errors import TreeLabError
from utils.log import setup_logging
from VERSION import lab_version

logger = setup_logging()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treelab",
        description="Learn decision trees under the uniform distribution with membership queries."
    )
    parser.add_argument("--version", action="version", version=lab_version)
    subparsers = parser.add_subparsers(dest="command", required=True)

    commands_dir = os.path.join(os.path.dirname(__file__), "commands")
    if not os.path.exists(commands_dir):
        raise SystemExit("ERROR: 'commands' directory not found.")
    for filename in sorted(os.listdir(commands_dir)):
        if filename.endswith(".py") and not filename.startswith("__"):
            extension = f"commands.{filename[:-3]}"
            module = importlib.import_module(extension)
            module.setup(subparsers)
            logger.debug(f"Loaded {extension}")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logger.debug(f"treelab {lab_version}: {args.command}")
    try:
        return args.handler(args) or 0
    except TreeLabError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"ERROR: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
