#!/usr/bin/env python3
"""Run the scaling experiment with the committed scaling_pendulum.yaml settings."""

import sys
from pathlib import Path

from hkprop.harness.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    extra = sys.argv[1:]
    sys.exit(main(["scaling",
                   "--config", str(ROOT / "configs" / "scaling_pendulum.yaml"),
                   "--out", str(ROOT / "out" / "scaling_pendulum")] + extra))
