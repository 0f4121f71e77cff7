#!/usr/bin/env python3
"""Equiwave convenience entrypoint.

This file exists so you can run the tool from a source checkout:

- `python3 main.py weyl --config equiwave.conf`

For the installable entrypoint, use:

- `python -m equiwave`
- `equiwave`
"""

from __future__ import annotations

from equiwave.__main__ import main


if __name__ == "__main__":
    raise SystemExit(main())
