"""Classical flow: Hamilton equations + action + variational (stability) system.

Everything is integrated jointly with a fixed-step classical RK4 scheme so that
the action and the stability blocks stay consistent with the same discretization
of the trajectory. A batched ensemble engine drives both single trajectories and
the ~10^4-node ensembles used by the propagator.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import FlowDivergenceError
from .hamiltonians import HamiltonianModel, symplectic_matrix

__all__ = [
    "PhasePoint",
    "FlowState",
    "TrajectoryRecord",
    "EnsembleResult",
    "integrate_flow",
    "integrate_ensemble",
    "symplectic_defect",
    "jacobian_check",
    "trajectory_to_csv",
]

DEFAULT_STEPS_PER_UNIT = 1000


@dataclass(frozen=True)
class PhasePoint:
    """Point z = (q, p) in phase space R^{2d}."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.atleast_1d(np.asarray(self.q, dtype=float)))
        object.__setattr__(self, "p", np.atleast_1d(np.asarray(self.p, dtype=float)))
        if self.q.shape != self.p.shape or self.q.ndim != 1:
            raise ValueError("q and p must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p))):
            raise ValueError("phase point entries must be finite")

    @property
    def dim(self) -> int:
        return self.q.size

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_array(cls, X) -> "PhasePoint":
        X = np.asarray(X, dtype=float)
        d = X.size // 2
        return cls(X[:d], X[d:])


@dataclass(frozen=True)
class FlowState:
    """Flow data at one time: z_t, action S(t, z), stability blocks A, B, C, D.

    The blocks are the d x d sub-matrices of F(t) = [[A, B], [C, D]], with
    A = dq_t/dq etc. h1 carries the accumulated subprincipal integral
    int_{t0}^{t} H1(z_s) ds (zero when the model has no H1).
    """

    t: float
    z: PhasePoint
    action: float
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    h1: float = 0.0

    def stability_matrix(self) -> np.ndarray:
        return np.block([[self.A, self.B], [self.C, self.D]])


@dataclass(frozen=True)
class TrajectoryRecord:
    """Ordered flow samples for a single initial condition."""

    initial: PhasePoint
    t0: float
    step: float
    samples: tuple

    @property
    def final(self) -> FlowState:
        return self.samples[-1]

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])


@dataclass(frozen=True)
class EnsembleResult:
    """Snapshots of a batch integration: arrays indexed (snapshot, node, ...)."""

    t0: float
    t1: float
    steps: int
    snapshot_times: np.ndarray
    Z: np.ndarray      # (m, n, 2d)
    S: np.ndarray      # (m, n)
    A: np.ndarray      # (m, n, d, d)
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    H1: np.ndarray     # (m, n)


def _j_mul(M: np.ndarray, d: int) -> np.ndarray:
    # Left-multiply a (..., 2d, k) stack by J = [[0, I], [-I, 0]].
    return np.concatenate([M[..., d:, :], -M[..., :d, :]], axis=-2)


def _rhs(model: HamiltonianModel, t: float, Z: np.ndarray, F: np.ndarray):
    d = model.dim
    grad = model.gradient(t, Z)
    if not np.all(np.isfinite(grad)):
        raise FlowDivergenceError(t)
    dZ = np.concatenate([grad[..., d:], -grad[..., :d]], axis=-1)
    dS = np.sum(Z[..., d:] * grad[..., d:], axis=-1) - model.value(t, Z)
    hess = model.hessian(t, Z)
    dF = _j_mul(hess @ F, d)
    if model.subprincipal is not None:
        dH1 = np.asarray(model.subprincipal(t, Z), dtype=float)
    else:
        dH1 = None
    return dZ, dS, dF, dH1


def integrate_ensemble(
    model: HamiltonianModel,
    Z0: np.ndarray,
    t0: float,
    t1: float,
    steps: int,
    snapshot_indices: Optional[Sequence[int]] = None,
    step_monitor: Optional[Callable] = None,
) -> EnsembleResult:
    """Integrate a batch of trajectories jointly with action and stability blocks.

    Parameters
    ----------
    model : HamiltonianModel
    Z0 : (n, 2d) array
        Initial phase points.
    t0, t1 : float
        Time interval (t1 < t0 integrates backwards).
    steps : int
        Number of fixed RK4 steps, >= 1.
    snapshot_indices : sequence of int, optional
        Step indices (0..steps) at which to record the state; defaults to just
        the final step. Index 0 is the initial condition.
    step_monitor : callable, optional
        Called as step_monitor(t, Z, A, B, C, D) after every accepted step;
        used by the propagator for branch tracking. Arrays must not be mutated.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    d = model.dim
    Z = np.array(Z0, dtype=float)
    if Z.ndim != 2 or Z.shape[1] != 2 * d:
        raise ValueError(f"Z0 must have shape (n, {2 * d})")
    n = Z.shape[0]

    if snapshot_indices is None:
        snapshot_indices = [steps]
    snap_set = sorted(set(int(k) for k in snapshot_indices))
    if snap_set and (snap_set[0] < 0 or snap_set[-1] > steps):
        raise ValueError("snapshot indices must lie in [0, steps]")

    h = (t1 - t0) / steps
    S = np.zeros(n)
    F = np.broadcast_to(np.eye(2 * d), (n, 2 * d, 2 * d)).copy()
    H1 = np.zeros(n)

    m = len(snap_set)
    out_Z = np.empty((m, n, 2 * d))
    out_S = np.empty((m, n))
    out_A = np.empty((m, n, d, d))
    out_B = np.empty((m, n, d, d))
    out_C = np.empty((m, n, d, d))
    out_D = np.empty((m, n, d, d))
    out_H1 = np.zeros((m, n))
    snap_times = np.empty(m)

    def record(slot, k):
        snap_times[slot] = t0 + k * h
        out_Z[slot] = Z
        out_S[slot] = S
        out_A[slot] = F[:, :d, :d]
        out_B[slot] = F[:, :d, d:]
        out_C[slot] = F[:, d:, :d]
        out_D[slot] = F[:, d:, d:]
        out_H1[slot] = H1

    slot = 0
    if snap_set and snap_set[0] == 0:
        record(0, 0)
        slot = 1

    track_h1 = model.subprincipal is not None
    for k in range(steps):
        t = t0 + k * h
        dZ1, dS1, dF1, dH1 = _rhs(model, t, Z, F)
        dZ2, dS2, dF2, dH2 = _rhs(model, t + 0.5 * h, Z + 0.5 * h * dZ1, F + 0.5 * h * dF1)
        dZ3, dS3, dF3, dH3 = _rhs(model, t + 0.5 * h, Z + 0.5 * h * dZ2, F + 0.5 * h * dF2)
        dZ4, dS4, dF4, dH4 = _rhs(model, t + h, Z + h * dZ3, F + h * dF3)
        Z = Z + (h / 6.0) * (dZ1 + 2.0 * dZ2 + 2.0 * dZ3 + dZ4)
        S = S + (h / 6.0) * (dS1 + 2.0 * dS2 + 2.0 * dS3 + dS4)
        F = F + (h / 6.0) * (dF1 + 2.0 * dF2 + 2.0 * dF3 + dF4)
        if track_h1:
            H1 = H1 + (h / 6.0) * (dH1 + 2.0 * dH2 + 2.0 * dH3 + dH4)
        if not np.all(np.isfinite(Z)):
            raise FlowDivergenceError(t + h)
        if step_monitor is not None:
            step_monitor(t + h, Z, F[:, :d, :d], F[:, :d, d:], F[:, d:, :d], F[:, d:, d:])
        while slot < m and snap_set[slot] == k + 1:
            record(slot, k + 1)
            slot += 1

    return EnsembleResult(t0=t0, t1=t1, steps=steps, snapshot_times=snap_times,
                          Z=out_Z, S=out_S, A=out_A, B=out_B, C=out_C, D=out_D,
                          H1=out_H1)


def integrate_flow(model: HamiltonianModel, z0: PhasePoint, t0: float, t1: float,
                   steps: int) -> TrajectoryRecord:
    """Integrate one trajectory, retaining the state at every step.

    Jointly advances z' = J grad H, S' = p . dq/dt - H and F' = J Hess(H) F with
    fixed-step RK4; the first sample is the initial condition (identity F, zero
    action). Raises FlowDivergenceError with the failure time on non-finite
    states.
    """
    if not isinstance(z0, PhasePoint):
        z0 = PhasePoint.from_array(np.asarray(z0, dtype=float))
    res = integrate_ensemble(model, z0.as_array()[None, :], t0, t1, steps,
                             snapshot_indices=range(steps + 1))
    samples = []
    for k in range(res.snapshot_times.size):
        samples.append(FlowState(
            t=float(res.snapshot_times[k]),
            z=PhasePoint.from_array(res.Z[k, 0]),
            action=float(res.S[k, 0]),
            A=res.A[k, 0].copy(), B=res.B[k, 0].copy(),
            C=res.C[k, 0].copy(), D=res.D[k, 0].copy(),
            h1=float(res.H1[k, 0]),
        ))
    return TrajectoryRecord(initial=z0, t0=t0, step=(t1 - t0) / steps,
                            samples=tuple(samples))


def symplectic_defect(state) -> float:
    """Frobenius norm of F^T J F - J; zero for exactly symplectic F.

    Accepts a FlowState or a raw 2d x 2d matrix.
    """
    F = state.stability_matrix() if isinstance(state, FlowState) else np.asarray(state, dtype=float)
    d = F.shape[0] // 2
    J = symplectic_matrix(d)
    return float(np.linalg.norm(F.T @ J @ F - J))


def jacobian_check(model: HamiltonianModel, z0, t: float, h: float = 1e-5,
                   steps: Optional[int] = None) -> float:
    """Max-norm gap between integrated F(t) and centered FD of the flow map."""
    if h <= 0:
        raise ValueError("FD step h must be positive")
    if not isinstance(z0, PhasePoint):
        z0 = PhasePoint.from_array(np.asarray(z0, dtype=float))
    if steps is None:
        steps = max(1, int(round(DEFAULT_STEPS_PER_UNIT * abs(t))))
    X0 = z0.as_array()
    n = X0.size
    shifts = np.concatenate([np.eye(n) * h, -np.eye(n) * h], axis=0)
    res = integrate_ensemble(model, X0[None, :] + shifts, 0.0, t, steps)
    Zf = res.Z[-1]
    F_num = (Zf[:n] - Zf[n:]).T / (2.0 * h)
    rec = integrate_flow(model, z0, 0.0, t, steps)
    return float(np.max(np.abs(F_num - rec.final.stability_matrix())))


def trajectory_to_csv(record: TrajectoryRecord, path) -> None:
    """Dump samples as CSV: t, q..., p..., S, then A, B, C, D entries row-major."""
    d = record.initial.dim
    header = (["t"] + [f"q{i}" for i in range(d)] + [f"p{i}" for i in range(d)]
              + ["S"]
              + [f"{blk}{i}{j}" for blk in "ABCD" for i in range(d) for j in range(d)])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for s in record.samples:
            row = ([s.t] + list(s.z.q) + list(s.z.p) + [s.action]
                   + [x for blk in (s.A, s.B, s.C, s.D) for x in blk.ravel()])
            writer.writerow(f"{v:.17g}" for v in row)
