"""Command line interface for the experiment harness.

Subcommands map one-to-one onto the runners in experiments.py:

    hkprop propagate        --config cfg.yaml [--out DIR] [--workers N] [--seed K]
    hkprop scaling          ...
    hkprop phase-invariance ...
    hkprop ehrenfest        ...
    hkprop inspect-kernel   ...

Each command writes CSV tables and a summary.json into the output directory
(--out overrides output.dir from the config) and prints the headline numbers.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from ..errors import HKError
from .config import load_config_file
from .experiments import (run_ehrenfest, run_inspect_kernel, run_phase_invariance,
                          run_propagate, run_scaling_study)

_COMMANDS = {
    "propagate": (run_propagate, "propagate one state and compare against the reference"),
    "scaling": (run_scaling_study, "error versus hbar ladder with a slope fit"),
    "phase-invariance": (run_phase_invariance,
                         "difference between two width phase choices across the ladder"),
    "ehrenfest": (run_ehrenfest, "first threshold crossing time per hbar"),
    "inspect-kernel": (run_inspect_kernel,
                       "phase-space kernel decay and peak locations"),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hkprop",
        description="Semiclassical propagator experiments: error ladders, "
                    "crossing sweeps and kernel diagnostics.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in _COMMANDS.items():
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, type=Path,
                         help="YAML experiment configuration")
        cmd.add_argument("--out", type=Path, default=None,
                         help="output directory (default: output.dir from the config)")
        cmd.add_argument("--workers", type=int, default=1,
                         help="worker processes for independent jobs (default 1)")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the config seed for node jitter")
    return parser


def _headline(command: str, summary: dict) -> str:
    if command in ("scaling", "phase-invariance"):
        fit = summary["fit"]
        slope = "n/a (quadrature floor)" if fit["slope"] is None else f"{fit['slope']:.4f}"
        return (f"slope {slope} over {fit['points_used']} points, "
                f"monotone={summary['monotone_decreasing']}")
    if command == "ehrenfest":
        growth = summary["growth"]
        stars = ", ".join(f"hbar={c['hbar']:g}: "
                          + (f"t*={c['t_star']:g}" if c["t_star"] is not None
                             else c["status"])
                          for c in summary["crossings"])
        c_fit = "n/a" if growth["c_fit"] is None else f"{growth['c_fit']:.3f}"
        return f"{stars}; nondecreasing={growth['nondecreasing']}, c={c_fit}"
    if command == "inspect-kernel":
        return (f"monotone_decay={summary['monotone_decay']}, "
                f"peak_tracks_flow={summary['peak_tracks_flow']}, "
                f"off_graph_mass_fraction={summary['off_graph_mass_fraction']:.3e}")
    rows = summary["rows"]
    parts = ", ".join(f"t={r['t']:g}: err={r['l2_error']:.3e}" for r in rows)
    return parts


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config_file(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        out_dir = args.out if args.out is not None else Path(cfg.output.dir)
        runner = _COMMANDS[args.command][0]
        summary = runner(cfg, workers=max(1, args.workers), out_dir=out_dir)
    except HKError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{args.command}: {_headline(args.command, summary)}")
    print(f"outputs written to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
