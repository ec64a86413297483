#!/usr/bin/env python3
"""Run the ehrenfest experiment with the committed ehrenfest_pendulum.yaml settings."""

import sys
from pathlib import Path

from hkprop.harness.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    extra = sys.argv[1:]
    sys.exit(main(["ehrenfest",
                   "--config", str(ROOT / "configs" / "ehrenfest_pendulum.yaml"),
                   "--out", str(ROOT / "out" / "ehrenfest_pendulum")] + extra))
