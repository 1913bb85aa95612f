# -*- coding: utf-8 -*-
"""Repository entry point; equivalent to ``python -m routine_discovery.cli``."""

from routine_discovery.cli import main

if __name__ == "__main__":
    raise SystemExit(main())
