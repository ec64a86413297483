#!/usr/bin/env python3
"""Run the propagate experiment with the committed propagate_harmonic.yaml settings."""

import sys
from pathlib import Path

from hkprop.harness.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    extra = sys.argv[1:]
    sys.exit(main(["propagate",
                   "--config", str(ROOT / "configs" / "propagate_harmonic.yaml"),
                   "--out", str(ROOT / "out" / "propagate_harmonic")] + extra))
