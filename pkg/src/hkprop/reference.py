"""Independent reference propagators.

Two oracles that share no numerical machinery with the semiclassical pipeline:

- exact Gaussian (metaplectic) evolution for quadratic Hamiltonians, with the
  stability matrix computed by scipy's matrix exponential rather than the RK4
  integrator;
- a Strang split-operator spectral solver for models with H = T(p) + V(q).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import expm

from ._branch import SqrtTracker
from .coherent import (GridSpec, PhaseGrid, SiegelMatrix, WaveFunction,
                       build_quadrature, fb_transform, gaussian_batch, siegel_iI)
from .errors import SplitStepError
from .hamiltonians import HamiltonianModel, symplectic_matrix

__all__ = [
    "GaussianState",
    "exact_quadratic_coherent",
    "exact_quadratic_apply",
    "split_step_propagate",
    "gaussian_to_wavefunction",
]


@dataclass(frozen=True)
class GaussianState:
    """Evolved Gaussian: center z_t, width Gamma_t, scalar amplitude, hbar.

    The amplitude carries the branch-continuous [det(A + Gamma0 B)]^{-1/2}
    times det^{1/4} Im Gamma0 (and, for completeness, the phase
    exp(i delta / hbar) with delta = S + (p.q - p_t.q_t)/2, which vanishes
    identically for the homogeneous quadratic models accepted here). The
    wavefunction assembly uses the same plane-wave convention as phi_z, so no
    separate action factor appears; see gaussian_to_wavefunction.
    """

    center: np.ndarray
    width: SiegelMatrix
    amplitude: complex
    hbar: float


def gaussian_to_wavefunction(state: GaussianState, grid: GridSpec) -> WaveFunction:
    """Sample amplitude * (pi hbar)^{-d/4} e^{(i/h)(p.x - p.q/2) + (i/2h)Gamma(x-q)^2}."""
    ones = np.ones(1)
    vals = gaussian_batch(state.center[None, :], None, state.hbar, grid,
                          gammas=state.width.entries[None, :, :], a_values=ones)[0]
    return WaveFunction(grid, (state.amplitude * vals).reshape(grid.shape), state.hbar)


def _require_quadratic(model: HamiltonianModel) -> np.ndarray:
    d = model.dim
    X1 = np.zeros((1, 2 * d))
    X2 = 0.7 * np.ones((1, 2 * d))
    H1 = model.hessian(0.0, X1)[0]
    H2 = model.hessian(0.0, X2)[0]
    if not np.allclose(H1, H2, rtol=0, atol=1e-10):
        raise ValueError(f"model kind {model.kind!r} is not quadratic "
                         "(Hessian varies across phase space)")
    return H1


def _metaplectic_path(hess: np.ndarray, gamma0: SiegelMatrix, t: float,
                      path_steps: int = 64):
    """F(t) = expm(t J Hess) plus branch-continuous det^{1/2}(A + Gamma0 B)."""
    d = hess.shape[0] // 2
    JH = symplectic_matrix(d) @ hess
    G0 = gamma0.entries

    steps = path_steps
    while True:
        tracker = SqrtTracker(np.array([1.0 + 0j]), np.array([1.0 + 0j]))
        for k in range(1, steps + 1):
            F = expm((t * k / steps) * JH)
            A, B = F[:d, :d], F[:d, d:]
            tracker.update(np.array([np.linalg.det(A + G0 @ B)]))
        if tracker.certified() or t == 0.0:
            break
        if steps >= 65536:
            raise RuntimeError("metaplectic path refinement failed to settle")
        steps *= 2

    F = expm(t * JH)
    root = complex(tracker.values()[0])
    return F, root


def exact_quadratic_coherent(model: HamiltonianModel, z, gamma0: SiegelMatrix,
                             t: float, hbar: float) -> GaussianState:
    """Exactly evolved coherent state for a quadratic model.

    Center follows the linear flow, the width follows the Moebius update
    Gamma_t = (C + Gamma0 D)(A + Gamma0 B)^{-1}, and the amplitude is
    det^{-1/2}(A + Gamma0 B) * det^{1/4} Im Gamma0 with the square root tracked
    continuously from t = 0. Rejects models whose Hessian is not constant.
    """
    hess = _require_quadratic(model)
    d = model.dim
    arr = getattr(z, "as_array", None)
    z0 = arr() if arr is not None else np.asarray(z, dtype=float).ravel()
    F, root = _metaplectic_path(hess, gamma0, t)
    A, B = F[:d, :d], F[:d, d:]
    C, D = F[d:, :d], F[d:, d:]
    zt = F @ z0
    G0 = gamma0.entries
    gamma_t = SiegelMatrix(np.linalg.solve((A + G0 @ B).T, (C + G0 @ D).T).T)
    amplitude = gamma0.a_gamma() / root
    return GaussianState(center=zt, width=gamma_t, amplitude=complex(amplitude),
                         hbar=hbar)


def exact_quadratic_apply(model: HamiltonianModel, psi0: WaveFunction, t: float,
                          gamma_decomp: Optional[SiegelMatrix] = None,
                          zgrid: Optional[PhaseGrid] = None,
                          coverage_target: float = 1.0 - 1e-8,
                          density: float = 6.0, chunk: int = 256) -> WaveFunction:
    """Propagate an arbitrary state under a quadratic model, exactly.

    Decomposes psi0 over coherent states of width gamma_decomp, evolves each
    with the closed-form Gaussian flow (one shared stability matrix, since the
    flow is z-independent), and resynthesizes on psi0's grid. The only error is
    quadrature truncation.
    """
    d = model.dim
    gd = gamma_decomp if gamma_decomp is not None else siegel_iI(d)
    hess = _require_quadratic(model)
    if zgrid is None:
        zgrid = build_quadrature(psi0, gd, coverage_target=coverage_target,
                                 density=density)
    coeffs = fb_transform(psi0, gd, zgrid)

    F, root = _metaplectic_path(hess, gd, t)
    A, B = F[:d, :d], F[:d, d:]
    C, D = F[d:, :d], F[d:, d:]
    G0 = gd.entries
    gamma_t = SiegelMatrix(np.linalg.solve((A + G0 @ B).T, (C + G0 @ D).T).T)
    Zt = zgrid.nodes @ F.T

    hbar = psi0.hbar
    const = ((2.0 * np.pi * hbar) ** (-d / 2.0)
             * gd.a_gamma() / (root * gamma_t.a_gamma()))
    acc = np.zeros(int(np.prod(psi0.grid.shape)), dtype=complex)
    coeff = zgrid.weights * coeffs
    for k in range(0, Zt.shape[0], chunk):
        block = gaussian_batch(Zt[k:k + chunk], gamma_t, hbar, psi0.grid)
        acc += coeff[k:k + chunk] @ block
    acc *= const
    info = {"coverage": zgrid.coverage, "nodes": zgrid.node_count}
    return WaveFunction(psi0.grid, acc.reshape(psi0.grid.shape), hbar, info=info)


def _spectral_tail_fraction(spec_mass: np.ndarray, grid: GridSpec) -> float:
    # Mass fraction in the top 10% of |xi| per axis (aliasing sentinel).
    total = spec_mass.sum()
    frac = 0.0
    for i in range(grid.dim):
        n = grid.shape[i]
        xi = np.fft.fftfreq(n)
        other = tuple(j for j in range(grid.dim) if j != i)
        marg = spec_mass.sum(axis=other) if other else spec_mass
        tail = marg[np.abs(xi) >= 0.45].sum()
        frac = max(frac, float(tail / total))
    return frac


def _boundary_fraction(values: np.ndarray, grid: GridSpec) -> float:
    mass = np.abs(values) ** 2
    total = mass.sum()
    worst = 0.0
    for i in range(grid.dim):
        sl_lo = [slice(None)] * grid.dim
        sl_hi = [slice(None)] * grid.dim
        sl_lo[i] = slice(0, 2)
        sl_hi[i] = slice(-2, None)
        worst = max(worst, float(mass[tuple(sl_lo)].sum() / total),
                    float(mass[tuple(sl_hi)].sum() / total))
    return worst


def split_step_propagate(model: HamiltonianModel, psi0: WaveFunction, t: float,
                         steps: Optional[int] = None,
                         check_every: Optional[int] = None) -> WaveFunction:
    """Strang split-operator evolution for H = T(p) + V(q).

    Each step applies e^{-iV dt/2h} e^{-iT dt/h} e^{-iV dt/2h}, with the kinetic
    factor acting in the discrete frequency domain (xi = 2 pi hbar k / L).
    Second-order accurate in dt and norm-conserving to roundoff. Raises
    SplitStepError when mass reaches the box boundary or when the spectral tail
    indicates aliasing (checked periodically and at the end).
    """
    if model.split_form is None:
        raise ValueError(f"model kind {model.kind!r} has no split form")
    if steps is None:
        steps = max(1, int(np.ceil(2000 * abs(t))))
    if t == 0.0:
        return psi0.with_values(psi0.values.copy())
    if check_every is None:
        check_every = max(1, steps // 8)

    grid = psi0.grid
    hbar = psi0.hbar
    d = grid.dim
    dt = t / steps

    X = grid.points().reshape(grid.shape + (d,))
    V = model.split_form.potential(X)
    xi_axes = [2.0 * np.pi * hbar * np.fft.fftfreq(grid.shape[i], d=grid.spacing[i])
               for i in range(d)]
    Xi = np.stack(np.meshgrid(*xi_axes, indexing="ij"), axis=-1)
    T = model.split_form.kinetic(Xi)

    half_v = np.exp(-0.5j * dt * V / hbar)
    full_v = half_v * half_v
    kin = np.exp(-1j * dt * T / hbar)

    def adequacy(values, spec_mass):
        b = _boundary_fraction(values, grid)
        if b > 1e-10:
            raise SplitStepError(f"boundary mass fraction {b:.2e} exceeds 1e-10")
        s = _spectral_tail_fraction(spec_mass, grid)
        if s > 1e-10:
            raise SplitStepError(f"spectral tail fraction {s:.2e} exceeds 1e-10")

    psi = psi0.values * half_v
    spec = None
    for k in range(steps):
        spec = np.fft.fftn(psi)
        psi = np.fft.ifftn(spec * kin)
        last = k == steps - 1
        psi = psi * (half_v if last else full_v)
        if (k + 1) % check_every == 0 or last:
            adequacy(psi, np.abs(spec) ** 2)

    return WaveFunction(grid, psi, hbar, info={"steps": steps})
