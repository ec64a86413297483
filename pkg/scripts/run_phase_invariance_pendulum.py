#!/usr/bin/env python3
"""Run the phase-invariance experiment with the committed phase_invariance_pendulum.yaml settings."""

import sys
from pathlib import Path

from hkprop.harness.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    extra = sys.argv[1:]
    sys.exit(main(["phase-invariance",
                   "--config", str(ROOT / "configs" / "phase_invariance_pendulum.yaml"),
                   "--out", str(ROOT / "out" / "phase_invariance_pendulum")] + extra))
