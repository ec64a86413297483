"""Shared fixtures for the expensive artifacts used by several tests.

Two things are costly enough to build once per session: a 100-trajectory
pendulum flow audit (branch tracking, symplecticity, energy drift) and a
Fourier-Bargmann kernel concentration report for the propagator at t=1.
Both are reduced to plain numbers here so the consuming tests stay cheap.
"""

import numpy as np
import pytest

import hkprop as hk

TRAJECTORY_COUNT = 100
TRAJECTORY_HORIZON = 10.0
TRAJECTORY_STEPS = 2000
TRAJECTORY_SEED = 20260814

KERNEL_HBAR = 0.05
KERNEL_T = 1.0
KERNEL_Y_SPACING = 0.1
KERNEL_X_CENTERS = np.array([
    [0.0, 1.0],
    [0.6, 0.8],
    [-0.6, 0.8],
    [1.2, 0.4],
])


def centered_box_nodes(lo, hi, spacing):
    """Cell-centered rectangular grid of phase-space nodes and the cell weight."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    axes = [np.arange(a + spacing / 2.0, b, spacing) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    return nodes, float(spacing ** len(axes))


@pytest.fixture(scope="session")
def pendulum_flow_audit():
    """Aggregate flow and prefactor diagnostics over 100 pendulum trajectories.

    Initial conditions are drawn from the libration region (|q|, |p| <= 1.2,
    energies below 0.36 against a separatrix at 1.0).  Near-separatrix starts
    are excluded on purpose: their monodromy norms grow like exp(t), and the
    symplectic defect of any float64 integrator scales with ||F||^2 times
    machine epsilon, which would swamp the 1e-8 budget regardless of step
    size.  Inside the libration region the ensemble is well conditioned.
    """
    model = hk.make_model("pendulum")
    cfg = hk.HKConfig(gamma=hk.siegel_iI(1))
    rng = np.random.default_rng(TRAJECTORY_SEED)
    Z0 = rng.uniform(-1.2, 1.2, size=(TRAJECTORY_COUNT, 2))

    min_abs_det = np.inf
    max_branch_gap = 0.0
    max_defect = 0.0
    max_energy_drift = 0.0
    for z0 in Z0:
        traj = hk.integrate_flow(model, z0, 0.0, TRAJECTORY_HORIZON,
                                 steps=TRAJECTORY_STEPS)
        Z = np.array([s.z.as_array() for s in traj.samples])
        H = model.value(0.0, Z)
        max_energy_drift = max(max_energy_drift, float(np.abs(H - H[0]).max()))
        for state in traj.samples[::4]:
            max_defect = max(max_defect, hk.symplectic_defect(state))
        max_defect = max(max_defect, hk.symplectic_defect(traj.samples[-1]))
        prefs = hk.hk_prefactor_general(traj, cfg, model)
        min_abs_det = min(min_abs_det, min(abs(p.det_arg) for p in prefs))
        max_branch_gap = max(max_branch_gap,
                             max(abs(p.value ** 2 - p.det_arg) for p in prefs))

    return {
        "count": TRAJECTORY_COUNT,
        "dim": 1,
        "min_abs_det": float(min_abs_det),
        "max_branch_gap": float(max_branch_gap),
        "max_defect": float(max_defect),
        "max_energy_drift": float(max_energy_drift),
    }


@pytest.fixture(scope="session")
def pendulum_kernel_report():
    """Kernel concentration report for the pendulum propagator at t=1.

    Probes four phase-space centers against a cell-centered Y box covering
    [-4, 4]^2; returns the report together with the Y cell weight so Schur
    and mass integrals can be formed by plain quadrature.
    """
    model = hk.make_model("pendulum")
    gamma = hk.siegel_iI(1)
    grid = hk.grid_for_box([-2.0 * np.pi], [2.0 * np.pi], 4096)
    cfg = hk.HKConfig(gamma=gamma)
    Y_nodes, y_weight = centered_box_nodes([-4.0, -4.0], [4.0, 4.0],
                                           KERNEL_Y_SPACING)

    def apply(psi):
        return hk.hk_propagate(model, psi, KERNEL_T, cfg)

    def flow_map(X):
        return hk.integrate_ensemble(model, X, 0.0, KERNEL_T, steps=1000).Z[-1]

    report = hk.fb_kernel_diagnostic(apply, flow_map, KERNEL_X_CENTERS,
                                     Y_nodes, KERNEL_HBAR, grid, gamma=gamma,
                                     bin_width=1.0)
    return report, y_weight
