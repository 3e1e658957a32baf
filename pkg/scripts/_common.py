"""Shared helpers for the experiment scripts (run from the repository root)."""
import sys
from pathlib import Path

from femnn import cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(command, *extra, config="desk.json"):
    argv = [command, "--config", str(CONFIGS / config), *extra, *sys.argv[1:]]
    print("femnn", " ".join(argv), flush=True)
    code = cli.main(["-v", *argv])
    if code:
        sys.exit(code)
