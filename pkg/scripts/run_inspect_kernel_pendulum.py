#!/usr/bin/env python3
"""Run the inspect-kernel experiment with the committed inspect_kernel_pendulum.yaml settings."""

import sys
from pathlib import Path

from hkprop.harness.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    extra = sys.argv[1:]
    sys.exit(main(["inspect-kernel",
                   "--config", str(ROOT / "configs" / "inspect_kernel_pendulum.yaml"),
                   "--out", str(ROOT / "out" / "inspect_kernel_pendulum")] + extra))
