"""Equiwave entrypoint.

Runs one experiment from a config file and writes CSV/JSON (and optionally
SVG) reports.
"""

from __future__ import annotations

from . import cli


def main(argv: list[str] | None = None) -> int:
    """Run the command-line interface."""
    return cli.main(argv)


if __name__ == "__main__":
    raise SystemExit(main())
