"""Semiclassical propagator core: prefactors, calibration, synthesis, kernels.

The propagator evaluated here is the leading-order coherent-state quadrature

    psi_t(x) = 2^{-d} (pi hbar)^{-d/2} sum_k w_k coeff(z_k) [f(t, z_k) / a_Gamma]
               e^{i delta(t, z_k)/hbar} e^{-i int H1} phi^{Theta}_{z_t(k)}(x)

with coeff the Fourier-Bargmann coefficients of the input, delta = S +
(p.q - p_t.q_t)/2, and f a branch-continuous square root of det M along each
trajectory, scaled by a calibration constant fixed so that t = t0 reproduces
the input exactly (resolution of identity). Theta is i*I (frozen), a fixed
Siegel matrix, or the transported width Gamma_t (thawed).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._branch import MAX_STEP_ROTATION, SqrtTracker, principal_sqrt_pd_real
from .classical_flow import TrajectoryRecord, integrate_ensemble, integrate_flow
from .coherent import (PhaseGrid, SiegelMatrix, WaveFunction, build_quadrature,
                       coherent_state, fb_transform, gamma_update_blocks,
                       gaussian_batch, siegel_iI)
from .errors import BranchAmbiguityError, MatrixSingularError
from .hamiltonians import HamiltonianModel

__all__ = [
    "HKPrefactor",
    "QuadratureSpec",
    "HKConfig",
    "calibrate_normalization",
    "m_matrix",
    "hk_prefactor_frozen",
    "hk_prefactor_general",
    "hk_propagate",
    "DecayReport",
    "fb_kernel_diagnostic",
    "decay_report_to_csv",
    "schur_norm_bound",
]

SYNTH_CHUNK = 256


@dataclass(frozen=True)
class HKPrefactor:
    """Branch-tracked prefactor sample: value^2 == det_arg, unwound argument."""

    value: complex
    det_arg: complex
    branch_phase: float
    t: float


@dataclass(frozen=True)
class QuadratureSpec:
    """Parameters forwarded to build_quadrature."""

    coverage_target: float = 1.0 - 1e-8
    density: float = 6.0
    pad: float = 2.0
    max_radius: float = 40.0


@dataclass(frozen=True)
class HKConfig:
    """Propagator configuration: widths, phase mode, quadrature, calibration.

    theta_mode is one of "frozen" (Theta = i I), "constant" (a fixed Siegel
    matrix, supplied in `theta`) or "thawed" (Theta_t = Gamma_t transported
    from gamma along each trajectory). `normalization` is the calibration
    constant making the propagator the identity at t = t0; when None it is
    computed in closed form at configuration time (calibrate_normalization).
    """

    gamma: SiegelMatrix
    theta_mode: str = "frozen"
    theta: Optional[SiegelMatrix] = None
    order: int = 0
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)
    steps_per_unit: int = 1000
    max_refinements: int = 4
    normalization: Optional[complex] = None

    def __post_init__(self):
        if self.theta_mode not in ("frozen", "constant", "thawed"):
            raise ValueError(f"unknown theta_mode {self.theta_mode!r}")
        if self.theta_mode == "constant" and self.theta is None:
            raise ValueError("constant theta_mode requires a theta matrix")
        if self.theta_mode != "constant" and self.theta is not None:
            raise ValueError("theta is only meaningful for the constant mode")
        if self.order != 0:
            raise ValueError("only the leading order (order=0) is implemented")

    def theta0(self, d: int) -> SiegelMatrix:
        """Output width at t0: i I (frozen), theta (constant), gamma (thawed)."""
        if self.theta_mode == "frozen":
            return siegel_iI(d)
        if self.theta_mode == "constant":
            return self.theta
        return self.gamma


def calibrate_normalization(cfg: HKConfig, d: int) -> complex:
    """Closed-form calibration constant det^{1/2}(i M0) / sqrt(det M0).

    M0 = conj(Gamma) - Theta0 is the phase matrix at t0. i M0 has
    positive-definite real part (Im Gamma + Im Theta0), so its det^{1/2} is
    the canonical product of principal eigenvalue roots; dividing by the
    principal scalar sqrt of det M0 makes `normalization * tracked-sqrt`
    independent of the principal branch chosen at the anchor. The constant has
    unit modulus, so prefactor values still square to the stored det_arg.
    """
    theta0 = cfg.theta0(d)
    M0 = np.conj(cfg.gamma.entries) - theta0.entries
    det0 = complex(np.linalg.det(M0))
    return principal_sqrt_pd_real(1j * M0) / np.sqrt(det0)


def _blocks_from_traj(traj: TrajectoryRecord):
    A = np.stack([s.A for s in traj.samples])
    B = np.stack([s.B for s in traj.samples])
    C = np.stack([s.C for s in traj.samples])
    D = np.stack([s.D for s in traj.samples])
    return A, B, C, D


def m_matrix(state, theta: SiegelMatrix, gamma: SiegelMatrix) -> np.ndarray:
    """Phase matrix M = C + D conj(Gamma) - Theta (A + B conj(Gamma)).

    Invertible for symplectic blocks and Siegel-class widths; a near-singular
    result (smallest singular value <= 1e-12) indicates broken preconditions
    and raises MatrixSingularError.
    """
    Gc = np.conj(gamma.entries)
    M = state.C + state.D @ Gc - theta.entries @ (state.A + state.B @ Gc)
    smin = np.linalg.svd(M, compute_uv=False)[-1]
    if smin <= 1e-12:
        raise MatrixSingularError(f"phase matrix nearly singular (s_min={smin:.3e})")
    return M


def _det_m_blocks(A, B, C, D, theta_entries, gamma_entries,
                  thawed_gamma: Optional[SiegelMatrix] = None) -> np.ndarray:
    """det M over (n, d, d) block batches; theta per node in thawed mode."""
    Gc = np.conj(gamma_entries)
    right = A + B @ Gc
    if thawed_gamma is not None:
        theta = gamma_update_blocks(A, B, C, D, thawed_gamma)
        M = C + D @ Gc - theta @ right
    else:
        M = C + D @ Gc - theta_entries @ right
    return np.linalg.det(M)


def _frozen_det(A, B, C, D) -> np.ndarray:
    return np.linalg.det((A + D) + 1j * (C - B))


def _track_path(dets: np.ndarray, value0: complex):
    """Sequential branch tracking over a (m,) determinant path."""
    theta = 2.0 * np.angle(value0)
    out_vals = np.empty(dets.size, dtype=complex)
    out_theta = np.empty(dets.size)
    out_vals[0] = value0
    out_theta[0] = theta
    max_rot = 0.0
    for k in range(1, dets.size):
        delta = float(np.angle(dets[k] * np.conj(dets[k - 1])))
        max_rot = max(max_rot, abs(delta))
        theta += delta
        out_vals[k] = np.sqrt(abs(dets[k])) * np.exp(0.5j * theta)
        out_theta[k] = theta
    return out_vals, out_theta, max_rot


def _prefactor_series(traj: TrajectoryRecord, det_fn: Callable,
                      model: Optional[HamiltonianModel],
                      max_refinements: int, scale: complex, det_scale: complex):
    """Shared engine for both prefactor operations, with step refinement."""
    times = traj.times()
    stride = 1
    current = traj
    for attempt in range(max_refinements + 1):
        A, B, C, D = _blocks_from_traj(current)
        dets = det_fn(A, B, C, D)
        value0 = complex(np.sqrt(dets[0]))
        vals, thetas, max_rot = _track_path(dets, value0)
        if max_rot < MAX_STEP_ROTATION:
            vals = vals[::stride] * scale
            thetas = thetas[::stride] + 2.0 * np.angle(scale)
            dets = dets[::stride] * det_scale
            return [HKPrefactor(value=complex(v), det_arg=complex(g),
                                branch_phase=float(th), t=float(tt))
                    for v, g, th, tt in zip(vals, dets, thetas, times)]
        if model is None or attempt == max_refinements:
            raise BranchAmbiguityError(
                f"determinant rotated {max_rot:.3f} rad in one step "
                f"(limit {MAX_STEP_ROTATION:.3f}) after {attempt} refinement(s)")
        stride *= 2
        steps = (len(traj.samples) - 1) * stride
        t_end = traj.samples[-1].t
        current = integrate_flow(model, traj.initial, traj.t0, t_end, steps)
    raise AssertionError("unreachable")


def hk_prefactor_frozen(traj: TrajectoryRecord,
                        model: Optional[HamiltonianModel] = None) -> list:
    """Branch-continuous det^{1/2}((A+D) + i(C-B)) along a trajectory.

    Starts from 2^{d/2} at t0 (stability blocks are the identity there) and
    follows the square root continuously. If the determinant rotates more than
    pi/2 within one step the path is refined by re-integration (when `model`
    is supplied) up to 4 doublings, else BranchAmbiguityError is raised.
    """
    return _prefactor_series(traj, lambda A, B, C, D: _frozen_det(A, B, C, D),
                             model, 4, scale=1.0 + 0j, det_scale=1.0 + 0j)


def hk_prefactor_general(traj: TrajectoryRecord, cfg: HKConfig,
                         model: Optional[HamiltonianModel] = None) -> list:
    """Calibrated branch-continuous prefactor normalization * det^{1/2}(M).

    The stored det_arg is normalization^2 * det M so that value^2 == det_arg
    holds exactly (the calibration constant has unit modulus). For the frozen
    mode with gamma = i I this coincides with hk_prefactor_frozen.
    """
    d = traj.initial.dim
    norm = cfg.normalization
    if norm is None:
        norm = calibrate_normalization(cfg, d)
    gamma_entries = cfg.gamma.entries
    if cfg.theta_mode == "thawed":
        det_fn = lambda A, B, C, D: _det_m_blocks(A, B, C, D, None, gamma_entries,
                                                  thawed_gamma=cfg.gamma)
    else:
        theta_entries = cfg.theta0(d).entries
        det_fn = lambda A, B, C, D: _det_m_blocks(A, B, C, D, theta_entries,
                                                  gamma_entries)
    return _prefactor_series(traj, det_fn, model, cfg.max_refinements,
                             scale=complex(norm), det_scale=complex(norm) ** 2)


WINDOW_SIGMAS = 8.5


def _synthesize(amp: np.ndarray, Zt: np.ndarray, thetas: np.ndarray,
                hbar: float, grid) -> np.ndarray:
    """Fixed-order weighted Gaussian synthesis sum_k amp_k phi^{Theta_k}_{Zt_k}.

    The Gaussians are evaluated without their det^{1/4} Im normalization (amp
    already carries every node-dependent factor). In d=1 each contribution is
    restricted to a window of WINDOW_SIGMAS position sigmas around its center
    (truncated mass below 1e-13 of a node's contribution); higher d falls back
    to full-grid evaluation.
    """
    d = grid.dim
    n = Zt.shape[0]
    npts = int(np.prod(grid.shape))
    acc = np.zeros(npts, dtype=complex)
    ones = np.ones(SYNTH_CHUNK)
    if d != 1:
        for k in range(0, n, SYNTH_CHUNK):
            blk = slice(k, min(k + SYNTH_CHUNK, n))
            basis = gaussian_batch(Zt[blk], None, hbar, grid,
                                   gammas=np.ascontiguousarray(thetas[blk]),
                                   a_values=ones[:Zt[blk].shape[0]])
            acc += amp[blk] @ basis
        return acc

    x0 = grid.origin[0]
    dx = grid.spacing[0]
    x = x0 + dx * np.arange(npts)
    q = Zt[:, 0]
    p = Zt[:, 1]
    g = thetas[:, 0, 0]
    sigma = np.sqrt(hbar / g.imag)
    order = np.argsort(q, kind="stable")
    for k in range(0, n, SYNTH_CHUNK):
        idx = order[k:k + SYNTH_CHUNK]
        lo_x = (q[idx] - WINDOW_SIGMAS * sigma[idx]).min()
        hi_x = (q[idx] + WINDOW_SIGMAS * sigma[idx]).max()
        lo = max(0, int(np.floor((lo_x - x0) / dx)))
        hi = min(npts, int(np.ceil((hi_x - x0) / dx)) + 1)
        if hi <= lo:
            continue
        xs = x[lo:hi]
        dxs = xs[None, :] - q[idx, None]
        phase = (1j / hbar) * (p[idx, None] * xs[None, :]
                               - 0.5 * (p[idx] * q[idx])[:, None]) \
            + (0.5j / hbar) * g[idx, None] * dxs ** 2
        acc[lo:hi] += amp[idx] @ np.exp(phase)
    return acc * (np.pi * hbar) ** (-0.25 * d)


def hk_propagate_batch(model: HamiltonianModel, psi0: WaveFunction,
                       times: Sequence[float], cfg: HKConfig, t0: float = 0.0,
                       zgrid: Optional[PhaseGrid] = None) -> list:
    """Propagate psi0 to several times from a single transported ensemble.

    `times` must be strictly increasing and commensurate with the integration
    step (each time must land on the uniform step grid); the last entry sets
    the horizon. One classical ensemble is integrated once, with prefactor
    branch tracking recorded at every requested snapshot.
    """
    d = model.dim
    hbar = psi0.hbar
    if psi0.dim != d or cfg.gamma.dim != d:
        raise ValueError("model, state and gamma dimensions disagree")
    times = [float(tt) for tt in times]
    if not times or any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("times must be a nonempty strictly increasing sequence")
    if times[0] < t0:
        raise ValueError("backward propagation must use a single time target")
    norm = cfg.normalization
    if norm is None:
        norm = calibrate_normalization(cfg, d)
    if zgrid is None:
        qspec = cfg.quadrature
        zgrid = build_quadrature(psi0, cfg.gamma,
                                 coverage_target=qspec.coverage_target,
                                 density=qspec.density, pad=qspec.pad,
                                 max_radius=qspec.max_radius)
    coeffs = fb_transform(psi0, cfg.gamma, zgrid)
    Z0 = zgrid.nodes
    n = Z0.shape[0]

    gamma_entries = cfg.gamma.entries
    if cfg.theta_mode == "thawed":
        det_fn = lambda A, B, C, D: _det_m_blocks(A, B, C, D, None, gamma_entries,
                                                  thawed_gamma=cfg.gamma)
    else:
        theta_entries = cfg.theta0(d).entries
        det_fn = lambda A, B, C, D: _det_m_blocks(A, B, C, D, theta_entries,
                                                  gamma_entries)

    horizon = times[-1]
    span = horizon - t0
    base_steps = max(1, int(np.ceil(cfg.steps_per_unit * abs(span))))
    M0 = np.conj(gamma_entries) - cfg.theta0(d).entries
    det0 = complex(np.linalg.det(M0))
    value0 = complex(np.sqrt(det0))

    result = None
    snap_values = None
    refinements = 0
    steps = base_steps
    for attempt in range(cfg.max_refinements + 1):
        if span == 0.0:
            snaps = [steps for _ in times]
        else:
            raw = [(tt - t0) / span * steps for tt in times]
            snaps = [int(round(r)) for r in raw]
            if any(abs(r - s) > 1e-6 for r, s in zip(raw, snaps)):
                raise ValueError(
                    "sample times must be commensurate with the step grid "
                    f"({cfg.steps_per_unit} steps per unit time)")
        tracker = SqrtTracker(np.full(n, det0), np.full(n, value0))
        snap_values = {}
        want = set(snaps)
        if 0 in want:
            snap_values[0] = (tracker.values(), np.full(n, det0), tracker.theta.copy())
        counter = [0]

        def monitor(tt, Z, A, B, C, D):
            tracker.update(det_fn(A, B, C, D))
            counter[0] += 1
            if counter[0] in want:
                snap_values[counter[0]] = (tracker.values(), tracker.det.copy(),
                                           tracker.theta.copy())

        result = integrate_ensemble(model, Z0, t0, horizon, steps,
                                    snapshot_indices=snaps, step_monitor=monitor)
        if tracker.certified():
            refinements = attempt
            break
        if attempt == cfg.max_refinements:
            raise BranchAmbiguityError(
                f"prefactor branch unresolved after {attempt} refinements "
                f"(max step rotation {tracker.max_rotation:.3f} rad)")
        steps *= 2

    snap_order = sorted(set(snaps))
    slot_of = {s: i for i, s in enumerate(snap_order)}
    const = 2.0 ** (-d) * (np.pi * hbar) ** (-d / 2.0)
    base_mass = zgrid.weights * np.abs(coeffs) ** 2
    outputs = []
    for tt, s in zip(times, snaps):
        slot = slot_of[s]
        Zt = result.Z[slot]
        S = result.S[slot]
        H1 = result.H1[slot]
        A, B, C, D = (result.A[slot], result.B[slot],
                      result.C[slot], result.D[slot])
        values = norm * snap_values[s][0]
        delta = S + 0.5 * (np.sum(Z0[:, d:] * Z0[:, :d], axis=1)
                           - np.sum(Zt[:, d:] * Zt[:, :d], axis=1))
        phases = np.exp(1j * delta / hbar)
        if model.subprincipal is not None:
            phases = phases * np.exp(-1j * H1)
        if cfg.theta_mode == "thawed":
            thetas = gamma_update_blocks(A, B, C, D, cfg.gamma)
        else:
            thetas = np.broadcast_to(cfg.theta0(d).entries, (n, d, d))
        amp = zgrid.weights * coeffs * values * phases / cfg.gamma.a_gamma()
        acc = const * _synthesize(amp, Zt, thetas, hbar, psi0.grid)
        info = {
            "t": tt,
            "zgrid_coverage": zgrid.coverage,
            "nodes": n,
            "steps": steps,
            "refinements": refinements,
            "normalization": complex(norm),
            "evolved_inside": _evolved_inside_fraction(Zt, thetas, hbar,
                                                       psi0.grid, base_mass),
        }
        outputs.append(WaveFunction(psi0.grid, acc.reshape(psi0.grid.shape),
                                    hbar, info=info))
    return outputs


def hk_propagate(model: HamiltonianModel, psi0: WaveFunction, t: float,
                 cfg: HKConfig, t0: float = 0.0,
                 zgrid: Optional[PhaseGrid] = None) -> WaveFunction:
    """Leading-order semiclassical propagation of psi0 to time t.

    Builds (or reuses) a phase-space quadrature for psi0, transports every node
    classically with branch tracking of the prefactor, and synthesizes the
    output on psi0's grid. At t = t0 the calibrated constant makes this the
    resolution of identity; the operation is linear in psi0 (exactly so when a
    shared zgrid is injected).
    """
    d = model.dim
    hbar = psi0.hbar
    if psi0.dim != d or cfg.gamma.dim != d:
        raise ValueError("model, state and gamma dimensions disagree")
    norm = cfg.normalization
    if norm is None:
        norm = calibrate_normalization(cfg, d)
    if zgrid is None:
        qspec = cfg.quadrature
        zgrid = build_quadrature(psi0, cfg.gamma,
                                 coverage_target=qspec.coverage_target,
                                 density=qspec.density, pad=qspec.pad,
                                 max_radius=qspec.max_radius)
    coeffs = fb_transform(psi0, cfg.gamma, zgrid)
    Z0 = zgrid.nodes
    n = Z0.shape[0]

    gamma_entries = cfg.gamma.entries
    if cfg.theta_mode == "thawed":
        det_fn = lambda A, B, C, D: _det_m_blocks(A, B, C, D, None, gamma_entries,
                                                  thawed_gamma=cfg.gamma)
    else:
        theta_entries = cfg.theta0(d).entries
        det_fn = lambda A, B, C, D: _det_m_blocks(A, B, C, D, theta_entries,
                                                  gamma_entries)

    base_steps = max(1, int(np.ceil(cfg.steps_per_unit * abs(t - t0))))
    M0 = np.conj(gamma_entries) - cfg.theta0(d).entries
    det0 = complex(np.linalg.det(M0))
    value0 = complex(np.sqrt(det0))

    result = None
    tracker = None
    refinements = 0
    steps = base_steps
    for attempt in range(cfg.max_refinements + 1):
        tracker = SqrtTracker(np.full(n, det0), np.full(n, value0))

        def monitor(tt, Z, A, B, C, D):
            tracker.update(det_fn(A, B, C, D))

        result = integrate_ensemble(model, Z0, t0, t, steps,
                                    snapshot_indices=[steps], step_monitor=monitor)
        if tracker.certified():
            refinements = attempt
            break
        if attempt == cfg.max_refinements:
            raise BranchAmbiguityError(
                f"prefactor branch unresolved after {attempt} refinements "
                f"(max step rotation {tracker.max_rotation:.3f} rad)")
        steps *= 2

    Zt = result.Z[-1]
    S = result.S[-1]
    H1 = result.H1[-1]
    A, B, C, D = result.A[-1], result.B[-1], result.C[-1], result.D[-1]

    values = norm * tracker.values()
    delta = S + 0.5 * (np.sum(Z0[:, d:] * Z0[:, :d], axis=1)
                       - np.sum(Zt[:, d:] * Zt[:, :d], axis=1))
    phases = np.exp(1j * delta / hbar)
    if model.subprincipal is not None:
        phases = phases * np.exp(-1j * H1)

    if cfg.theta_mode == "thawed":
        thetas = gamma_update_blocks(A, B, C, D, cfg.gamma)
    else:
        thetas = np.broadcast_to(cfg.theta0(d).entries, (n, d, d))

    amp = zgrid.weights * coeffs * values * phases / cfg.gamma.a_gamma()
    const = 2.0 ** (-d) * (np.pi * hbar) ** (-d / 2.0)
    acc = const * _synthesize(amp, Zt, thetas, hbar, psi0.grid)

    inside = _evolved_inside_fraction(Zt, thetas, hbar, psi0.grid,
                                      zgrid.weights * np.abs(coeffs) ** 2)
    info = {
        "zgrid_coverage": zgrid.coverage,
        "nodes": n,
        "steps": steps,
        "refinements": refinements,
        "normalization": complex(norm),
        "evolved_inside": inside,
    }
    return WaveFunction(psi0.grid, acc.reshape(psi0.grid.shape), hbar, info=info)


def _evolved_inside_fraction(Zt, thetas, hbar, grid, mass_weights) -> float:
    """Coefficient-mass fraction of nodes whose evolved Gaussian fits the grid."""
    d = grid.dim
    lo, hi = grid.box()
    q, p = Zt[:, :d], Zt[:, d:]
    lam_min = np.linalg.eigvalsh(thetas.imag).min(axis=-1)
    margin = np.minimum(q - lo[None, :], hi[None, :] - q).min(axis=1)
    tail = np.where(margin < 0, 1.0, np.exp(-lam_min * np.clip(margin, 0, None) ** 2 / hbar))
    nyq = np.pi * hbar / np.array(grid.spacing)
    ok = (tail <= 1e-8) & np.all(np.abs(p) <= 0.85 * nyq[None, :], axis=1)
    total = mass_weights.sum()
    if total == 0.0:
        return 1.0
    return float(mass_weights[ok].sum() / total)


@dataclass(frozen=True)
class DecayReport:
    """Binned concentration profile of a Fourier-Bargmann kernel."""

    bin_edges: np.ndarray       # (nbins + 1,) in units of sqrt(hbar)
    max_abs: np.ndarray         # (nbins,) max |K~| per bin
    counts: np.ndarray          # (nbins,) samples per bin
    kernel_abs: np.ndarray      # (nX, nY) |K~| including (2 pi hbar)^{-d}
    overlap_abs: np.ndarray     # (nX, nY) raw |<U phi_X, phi_Y>|
    dists: np.ndarray           # (nX, nY) |flow(X) - Y| / sqrt(hbar)
    peak_y_index: np.ndarray    # (nX,) argmax_Y |K~(X, Y)|
    X_nodes: np.ndarray
    Y_nodes: np.ndarray
    hbar: float
    dim: int

    def monotone_decay(self) -> bool:
        vals = self.max_abs[self.counts > 0]
        return bool(np.all(np.diff(vals) <= 1e-12))


def fb_kernel_diagnostic(apply: Callable[[WaveFunction], WaveFunction],
                         flow_map: Callable[[np.ndarray], np.ndarray],
                         X_nodes: np.ndarray, Y_nodes: np.ndarray, hbar: float,
                         grid, gamma: Optional[SiegelMatrix] = None,
                         bin_width: float = 1.0) -> DecayReport:
    """Sample K~(X, Y) = (2 pi hbar)^{-d} <apply(phi_X), phi_Y> and bin it.

    Distances are measured between the classically transported X and each Y,
    in units of sqrt(hbar); for a semiclassical propagator the binned maxima
    must decay away from the flow graph.
    """
    X_nodes = np.atleast_2d(np.asarray(X_nodes, dtype=float))
    Y_nodes = np.atleast_2d(np.asarray(Y_nodes, dtype=float))
    d = X_nodes.shape[1] // 2
    g = gamma if gamma is not None else siegel_iI(d)

    w = None
    overlaps = np.empty((X_nodes.shape[0], Y_nodes.shape[0]), dtype=complex)
    for i, X in enumerate(X_nodes):
        phiX = coherent_state(X, g, hbar, grid)
        out = apply(phiX)
        if w is None:
            w = out.grid.weights()
        ov = np.empty(Y_nodes.shape[0], dtype=complex)
        wpsi = w * out.flat()
        for k in range(0, Y_nodes.shape[0], SYNTH_CHUNK):
            blockY = gaussian_batch(Y_nodes[k:k + SYNTH_CHUNK], g, hbar, out.grid)
            ov[k:k + SYNTH_CHUNK] = np.conj(blockY) @ wpsi
        overlaps[i] = ov

    pref = (2.0 * np.pi * hbar) ** (-d)
    kernel_abs = pref * np.abs(overlaps)
    mapped = flow_map(X_nodes)
    diff = mapped[:, None, :] - Y_nodes[None, :, :]
    dists = np.linalg.norm(diff, axis=-1) / np.sqrt(hbar)

    smax = float(dists.max())
    nbins = max(1, int(np.ceil(smax / bin_width)))
    edges = bin_width * np.arange(nbins + 1)
    idx = np.minimum((dists.ravel() / bin_width).astype(int), nbins - 1)
    max_abs = np.zeros(nbins)
    counts = np.zeros(nbins, dtype=int)
    np.maximum.at(max_abs, idx, kernel_abs.ravel())
    np.add.at(counts, idx, 1)

    return DecayReport(bin_edges=edges, max_abs=max_abs, counts=counts,
                       kernel_abs=kernel_abs, overlap_abs=np.abs(overlaps),
                       dists=dists, peak_y_index=np.argmax(kernel_abs, axis=1),
                       X_nodes=X_nodes, Y_nodes=Y_nodes, hbar=hbar, dim=d)


def decay_report_to_csv(report: DecayReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lower", "bin_upper", "max_abs_ktilde", "count"])
        for k in range(report.max_abs.size):
            writer.writerow([f"{report.bin_edges[k]:.17g}",
                             f"{report.bin_edges[k + 1]:.17g}",
                             f"{report.max_abs[k]:.17g}",
                             str(int(report.counts[k]))])


def schur_norm_bound(kernel_samples: np.ndarray, x_weights: np.ndarray,
                     y_weights: np.ndarray, hbar: float, dim: int = 1) -> float:
    """Carleman/Schur estimate from raw overlap magnitudes |<U phi_X, phi_Y>|.

    Returns (2 pi hbar)^{-d} max(sup_Y int |K| dX, sup_X int |K| dY) by
    quadrature; an upper-bound estimate for the operator L2 norm. Warns when
    boundary samples exceed 1e-3 of the peak (effective support not covered).
    """
    K = np.abs(np.asarray(kernel_samples, dtype=float))
    if K.size == 0:
        return 0.0
    peak = K.max()
    if peak > 0:
        boundary = max(K[0, :].max(), K[-1, :].max(), K[:, 0].max(), K[:, -1].max())
        if boundary > 1e-3 * peak:
            warnings.warn("kernel support reaches the sample boundary; the "
                          "Schur bound may be an underestimate")
    col = float(np.max(x_weights @ K))
    row = float(np.max(K @ y_weights))
    return (2.0 * np.pi * hbar) ** (-dim) * max(col, row)
