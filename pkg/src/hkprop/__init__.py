"""Semiclassical coherent-state propagator with exact references and a harness.

Layout:

- hamiltonians: model catalog (harmonic, free, quadratic, pendulum,
  relativistic kinetic + quadratic trap) with analytic gradients and Hessians;
- classical_flow: batched RK4 transport of trajectories, actions and
  stability blocks;
- coherent: Gaussian states, the Fourier-Bargmann transform pair, phase-space
  quadrature construction;
- hk_core: branch-tracked prefactors and the leading-order propagator, plus
  kernel diagnostics and the Schur norm estimate;
- reference: exact quadratic (metaplectic) evolution and a split-step
  Fourier integrator for anharmonic ground truth;
- harness: config-driven experiments (error scaling, phase-choice invariance,
  reliability horizon) with CSV/JSON outputs and a CLI.
"""

from .errors import (BranchAmbiguityError, ConfigError, CoverageWarning,
                     FlowDivergenceError, GridAdequacyError, HKError,
                     MatrixSingularError, QuadratureError, SiegelError,
                     SplitStepError)
from .hamiltonians import HamiltonianModel, SplitForm, StabilityBound, estimate_delta, make_model
from .classical_flow import (EnsembleResult, FlowState, PhasePoint,
                             TrajectoryRecord, integrate_ensemble,
                             integrate_flow, jacobian_check, symplectic_defect,
                             trajectory_to_csv)
from .coherent import (GridSpec, PhaseGrid, SiegelMatrix, WaveFunction,
                       auto_grid, build_quadrature, coherent_state,
                       fb_inverse, fb_transform, gamma_update,
                       gamma_update_blocks, grid_for_box, inner,
                       l2_difference, siegel_iI, wavefunction_from_csv,
                       wavefunction_to_csv)
from .hk_core import (DecayReport, HKConfig, HKPrefactor, QuadratureSpec,
                      calibrate_normalization, decay_report_to_csv,
                      fb_kernel_diagnostic, hk_prefactor_frozen,
                      hk_prefactor_general, hk_propagate, hk_propagate_batch,
                      m_matrix, schur_norm_bound)
from .reference import (GaussianState, exact_quadratic_apply,
                        exact_quadratic_coherent, gaussian_to_wavefunction,
                        split_step_propagate)

__version__ = "0.1.0"

__all__ = [
    "HKError", "ConfigError", "GridAdequacyError", "QuadratureError",
    "FlowDivergenceError", "BranchAmbiguityError", "MatrixSingularError",
    "SiegelError", "SplitStepError", "CoverageWarning",
    "HamiltonianModel", "SplitForm", "StabilityBound", "make_model", "estimate_delta",
    "PhasePoint", "FlowState", "TrajectoryRecord", "EnsembleResult",
    "integrate_flow", "integrate_ensemble", "symplectic_defect",
    "jacobian_check", "trajectory_to_csv",
    "SiegelMatrix", "GridSpec", "WaveFunction", "PhaseGrid", "siegel_iI",
    "grid_for_box", "auto_grid", "coherent_state", "inner", "l2_difference",
    "fb_transform", "fb_inverse", "build_quadrature", "gamma_update",
    "gamma_update_blocks", "wavefunction_to_csv", "wavefunction_from_csv",
    "HKPrefactor", "QuadratureSpec", "HKConfig", "calibrate_normalization",
    "m_matrix", "hk_prefactor_frozen", "hk_prefactor_general", "hk_propagate",
    "hk_propagate_batch", "DecayReport", "fb_kernel_diagnostic",
    "decay_report_to_csv", "schur_norm_bound",
    "GaussianState", "gaussian_to_wavefunction", "exact_quadratic_coherent",
    "exact_quadratic_apply", "split_step_propagate",
    "__version__",
]
