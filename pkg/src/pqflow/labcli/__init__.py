"""Command-line front end: scenario files, traces, plots and checks."""

from .cli import main

__all__ = ["main"]
