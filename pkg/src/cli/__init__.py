# Command-line interface
from src.cli.app import build_parser, cmd_compute, cmd_simulate, cmd_sweep, main

__all__ = [
    "build_parser",
    "cmd_compute",
    "cmd_simulate",
    "cmd_sweep",
    "main",
]
