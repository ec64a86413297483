"""Experiment harness: configuration parsing, runners and the CLI."""

from .config import (EhrenfestCfg, ExperimentConfig, GridCfg, KernelCfg, ModelCfg,
                     OutputCfg, PhaseBCfg, PropagatorCfg, QuadratureCfg, ReferenceCfg,
                     StateCfg, TimeCfg, load_config_file, parse_config)
from .experiments import (ErrorRow, ErrorTable, reference_cross_check, run_ehrenfest,
                          run_inspect_kernel, run_phase_invariance, run_propagate,
                          run_scaling_study)
from .cli import main

__all__ = [
    "EhrenfestCfg", "ErrorRow", "ErrorTable", "ExperimentConfig", "GridCfg",
    "KernelCfg", "ModelCfg", "OutputCfg", "PhaseBCfg", "PropagatorCfg",
    "QuadratureCfg", "ReferenceCfg", "StateCfg", "TimeCfg", "load_config_file",
    "main", "parse_config", "reference_cross_check", "run_ehrenfest",
    "run_inspect_kernel", "run_phase_invariance", "run_propagate",
    "run_scaling_study",
]
