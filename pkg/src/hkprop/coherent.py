"""Gaussian coherent states, the Fourier-Bargmann transform pair, and quadrature.

Conventions fixed here and used everywhere else:

- inner products conjugate the SECOND argument: <f, g> = sum w f conj(g);
- the symplectic form is sigma(X, Y) = JX . Y with J = [[0, I], [-I, 0]];
- phi_z^Gamma(x) = (pi hbar)^{-d/4} det^{1/4}(Im Gamma)
  exp((i/hbar)(p.x - p.q/2) + (i/2 hbar) Gamma (x-q).(x-q));
- the transform is F[psi](z) = (2 pi hbar)^{-d/2} <psi, phi_z^Gamma> and the
  inverse synthesis carries the same (2 pi hbar)^{-d/2}, so the pair composes to
  the identity.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from functools import reduce
from typing import Optional, Tuple, Union

import numpy as np

from .errors import CoverageWarning, GridAdequacyError, QuadratureError, SiegelError

__all__ = [
    "SiegelMatrix",
    "GridSpec",
    "WaveFunction",
    "PhaseGrid",
    "siegel_iI",
    "grid_for_box",
    "auto_grid",
    "coherent_state",
    "fb_transform",
    "fb_inverse",
    "build_quadrature",
    "gamma_update",
    "gamma_update_blocks",
    "inner",
]

_PD_TOL = 1e-12


@dataclass(frozen=True)
class SiegelMatrix:
    """Complex symmetric d x d matrix with positive-definite imaginary part."""

    entries: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.entries, dtype=complex))
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise SiegelError(f"expected a square matrix, got shape {M.shape}")
        M = 0.5 * (M + M.T)
        eigs = np.linalg.eigvalsh(M.imag)
        if eigs.min() <= _PD_TOL:
            raise SiegelError(
                f"imaginary part not positive definite (min eigenvalue {eigs.min():.3e})")
        M.setflags(write=False)
        object.__setattr__(self, "entries", M)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def imag(self) -> np.ndarray:
        return self.entries.imag

    def a_gamma(self) -> float:
        """Normalization det^{1/4} Im Gamma (real positive)."""
        return float(np.linalg.det(self.imag)) ** 0.25


def siegel_iI(d: int, scale: float = 1.0) -> SiegelMatrix:
    """The isotropic width scale * i * identity."""
    return SiegelMatrix(1j * scale * np.eye(d))


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid: origin, per-axis spacing, per-axis point counts."""

    origin: tuple
    spacing: tuple
    shape: tuple

    def __post_init__(self):
        origin = tuple(float(x) for x in np.atleast_1d(self.origin))
        spacing = np.atleast_1d(self.spacing)
        if spacing.size == 1:
            spacing = np.repeat(spacing, len(origin))
        spacing = tuple(float(s) for s in spacing)
        shape = tuple(int(n) for n in np.atleast_1d(self.shape))
        if not (len(origin) == len(spacing) == len(shape)):
            raise ValueError("origin, spacing and shape must have equal lengths")
        if any(s <= 0 for s in spacing) or any(n < 2 for n in shape):
            raise ValueError("spacing must be positive and shape entries >= 2")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "shape", shape)

    @property
    def dim(self) -> int:
        return len(self.shape)

    def axes(self):
        return [self.origin[i] + self.spacing[i] * np.arange(self.shape[i])
                for i in range(self.dim)]

    def points(self) -> np.ndarray:
        """All grid points, flattened to (N, d) in row-major axis order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def weights(self) -> np.ndarray:
        """Flattened trapezoid weights (outer product of per-axis weights)."""
        per_axis = []
        for i in range(self.dim):
            w = np.full(self.shape[i], self.spacing[i])
            w[0] *= 0.5
            w[-1] *= 0.5
            per_axis.append(w)
        return reduce(np.multiply.outer, per_axis).ravel()

    def box(self):
        lo = np.array(self.origin)
        hi = lo + np.array(self.spacing) * (np.array(self.shape) - 1)
        return lo, hi


def grid_for_box(lo, hi, n) -> GridSpec:
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    n = np.broadcast_to(np.atleast_1d(n), lo.shape)
    if np.any(n < 2):
        raise ValueError("spacing must be positive and shape entries >= 2")
    return GridSpec(tuple(lo), tuple((hi - lo) / (n - 1)), tuple(int(k) for k in n))


@dataclass(frozen=True)
class WaveFunction:
    """Complex samples on a uniform position grid, with hbar attached."""

    grid: GridSpec
    values: np.ndarray
    hbar: float
    normalization: Optional[float] = None
    info: Optional[dict] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != self.grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("wavefunction samples must be finite")
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")
        object.__setattr__(self, "values", values)
        if self.normalization is not None:
            n = self.l2_norm()
            if abs(n - self.normalization) > 1e-8:
                raise ValueError(
                    f"stored normalization {self.normalization} but grid norm {n:.12g}")

    @property
    def grid_origin(self):
        return self.grid.origin

    @property
    def spacing(self):
        return self.grid.spacing

    @property
    def dim(self) -> int:
        return self.grid.dim

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def l2_norm(self) -> float:
        w = self.grid.weights()
        return float(np.sqrt(np.sum(w * np.abs(self.flat()) ** 2)))

    def with_values(self, values, info=None) -> "WaveFunction":
        return WaveFunction(self.grid, np.asarray(values, dtype=complex).reshape(self.grid.shape),
                            self.hbar, info=info)


def inner(f: WaveFunction, g: WaveFunction) -> complex:
    """Trapezoid inner product <f, g> = sum w f conj(g) (conjugates g)."""
    if f.grid != g.grid:
        raise ValueError("inner product requires a shared grid")
    w = f.grid.weights()
    return complex(np.sum(w * f.flat() * np.conj(g.flat())))


def l2_difference(f: WaveFunction, g: WaveFunction) -> float:
    if f.grid != g.grid:
        raise ValueError("difference requires a shared grid")
    w = f.grid.weights()
    return float(np.sqrt(np.sum(w * np.abs(f.flat() - g.flat()) ** 2)))


WAVEFUNCTION_SCHEMA = "hkprop-wavefunction-1"


def wavefunction_to_csv(psi: WaveFunction, path) -> None:
    """Write a wavefunction as CSV: grid metadata rows, then the samples.

    Layout (documented, stable): a schema_version row, then hbar, dim, and
    per-axis origin / spacing / shape rows, then a header row "index,re,im"
    followed by one row per sample in row-major order. Floats are printed
    with 17 significant digits, so a round trip is exact.
    """
    flat = psi.flat()
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["schema_version", WAVEFUNCTION_SCHEMA])
        writer.writerow(["hbar", f"{psi.hbar:.17g}"])
        writer.writerow(["dim", str(psi.grid.dim)])
        writer.writerow(["origin"] + [f"{x:.17g}" for x in psi.grid.origin])
        writer.writerow(["spacing"] + [f"{x:.17g}" for x in psi.grid.spacing])
        writer.writerow(["shape"] + [str(n) for n in psi.grid.shape])
        writer.writerow(["index", "re", "im"])
        for i in range(flat.size):
            writer.writerow([str(i), f"{flat[i].real:.17g}", f"{flat[i].imag:.17g}"])


def wavefunction_from_csv(path) -> WaveFunction:
    """Read a wavefunction written by wavefunction_to_csv."""
    with open(path, "r", newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    if not rows or rows[0] != ["schema_version", WAVEFUNCTION_SCHEMA]:
        raise ValueError(f"{path}: not a {WAVEFUNCTION_SCHEMA} file")
    meta = {}
    for key in ("hbar", "dim", "origin", "spacing", "shape"):
        row = rows[len(meta) + 1]
        if row[0] != key:
            raise ValueError(f"{path}: expected metadata row {key!r}, got {row[0]!r}")
        meta[key] = row[1:]
    hbar = float(meta["hbar"][0])
    dim = int(meta["dim"][0])
    if len(meta["origin"]) != dim or len(meta["spacing"]) != dim or len(meta["shape"]) != dim:
        raise ValueError(f"{path}: metadata rows disagree with dim={dim}")
    grid = GridSpec(tuple(float(x) for x in meta["origin"]),
                    tuple(float(x) for x in meta["spacing"]),
                    tuple(int(x) for x in meta["shape"]))
    if rows[6] != ["index", "re", "im"]:
        raise ValueError(f"{path}: missing sample header row")
    samples = rows[7:]
    count = int(np.prod(grid.shape))
    if len(samples) != count:
        raise ValueError(f"{path}: expected {count} samples, got {len(samples)}")
    values = np.empty(count, dtype=complex)
    for row in samples:
        values[int(row[0])] = complex(float(row[1]), float(row[2]))
    return WaveFunction(grid, values.reshape(grid.shape), hbar)


@dataclass(frozen=True)
class PhaseGrid:
    """Phase-space quadrature: nodes (n, 2d), positive weights, captured mass."""

    nodes: np.ndarray
    weights: np.ndarray
    coverage: float
    coverage_target: Optional[float] = None
    center: Optional[tuple] = None
    half_widths: Optional[tuple] = None
    shape: Optional[tuple] = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 2 or weights.shape != (nodes.shape[0],):
            raise ValueError("nodes must be (n, 2d) with matching weights")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def node_count(self) -> int:
        return self.nodes.shape[0]

    @property
    def dim(self) -> int:
        return self.nodes.shape[1] // 2


def _as_center(z, d: int) -> np.ndarray:
    arr = getattr(z, "as_array", None)
    X = arr() if arr is not None else np.asarray(z, dtype=float).ravel()
    if X.size != 2 * d:
        raise ValueError(f"phase point must have {2 * d} entries, got {X.size}")
    return X


def gaussian_batch(Z: np.ndarray, gamma, hbar: float, grid: GridSpec,
                   gammas: Optional[np.ndarray] = None,
                   a_values: Optional[np.ndarray] = None) -> np.ndarray:
    """Values of phi_{z_k}^{Gamma}(x) for a batch of nodes, shape (n, N).

    With `gammas` (n, d, d) each node gets its own width (thawed synthesis);
    `a_values` then supplies the per-node det^{1/4} Im normalizations.
    """
    d = grid.dim
    X = grid.points()
    q, p = Z[:, :d], Z[:, d:]
    dx = X[None, :, :] - q[:, None, :]
    if gammas is None:
        G = gamma.entries
        quad = np.einsum("nxi,ij,nxj->nx", dx, G, dx)
        a = np.full(Z.shape[0], gamma.a_gamma())
    else:
        quad = np.einsum("nxi,nij,nxj->nx", dx, gammas, dx)
        a = a_values
    lin = p @ X.T - 0.5 * np.sum(p * q, axis=1)[:, None]
    phase = (1j / hbar) * lin + (0.5j / hbar) * quad
    return (np.pi * hbar) ** (-d / 4.0) * a[:, None] * np.exp(phase)


def coherent_state(z, gamma: SiegelMatrix, hbar: float, grid: GridSpec) -> WaveFunction:
    """Sample phi_z^Gamma on a grid; unit L2 norm once the grid is adequate.

    Raises GridAdequacyError when the sampled mass deviates from 1 by more than
    1e-10 (box too small or spacing too coarse).
    """
    if hbar <= 0:
        raise ValueError("hbar must be positive")
    X = _as_center(z, grid.dim)
    vals = gaussian_batch(X[None, :], gamma, hbar, grid)[0]
    psi = WaveFunction(grid, vals.reshape(grid.shape), hbar)
    mass = psi.l2_norm() ** 2
    if abs(mass - 1.0) > 1e-10:
        raise GridAdequacyError(
            f"coherent state truncated: grid mass {mass:.12f} (need 1 +- 1e-10)")
    return psi


def auto_grid(centers, gamma: SiegelMatrix, hbar: float, halfwidth_sigmas: float = 8.0,
              points_per_sigma: float = 12.0) -> GridSpec:
    """Position grid covering coherent states at the given centers."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    d = gamma.dim
    q = centers[:, :d]
    lam_min = float(np.linalg.eigvalsh(gamma.imag).min())
    sigma = np.sqrt(hbar / (2.0 * lam_min))
    lo = q.min(axis=0) - halfwidth_sigmas * sigma
    hi = q.max(axis=0) + halfwidth_sigmas * sigma
    n = int(np.ceil((hi - lo).max() / (sigma / points_per_sigma))) + 1
    return grid_for_box(lo, hi, n)


def _check_nodes_representable(Z: np.ndarray, gamma: SiegelMatrix, hbar: float,
                               grid: GridSpec, tail_tol: float = 1e-8) -> None:
    d = grid.dim
    lo, hi = grid.box()
    lam_min = float(np.linalg.eigvalsh(gamma.imag).min())
    q, p = Z[:, :d], Z[:, d:]
    margin = np.minimum(q - lo[None, :], hi[None, :] - q)
    tail = np.exp(-lam_min * np.clip(margin, 0.0, None) ** 2 / hbar)
    tail = np.where(margin < 0, 1.0, tail)
    worst = int(np.argmax(tail.max(axis=1)))
    if tail.max() > tail_tol:
        raise GridAdequacyError(
            f"node {worst} at q={q[worst]} truncated by the position grid "
            f"(tail {tail.max():.2e} > {tail_tol:.0e})")
    nyq = np.pi * hbar / np.array(grid.spacing)
    if np.any(np.abs(p) > 0.85 * nyq[None, :]):
        worst = int(np.argmax(np.abs(p).max(axis=1)))
        raise GridAdequacyError(
            f"node {worst} with p={p[worst]} beyond 85% of the grid Nyquist "
            f"momentum {nyq}")


def fb_transform(psi: WaveFunction, gamma: SiegelMatrix, zgrid: PhaseGrid,
                 chunk: int = 256) -> np.ndarray:
    """Coefficients (2 pi hbar)^{-d/2} <psi, phi_z^Gamma> at the grid nodes."""
    d = psi.dim
    Z = zgrid.nodes
    _check_nodes_representable(Z, gamma, psi.hbar, psi.grid)
    wpsi = psi.grid.weights() * psi.flat()
    out = np.empty(Z.shape[0], dtype=complex)
    pref = (2.0 * np.pi * psi.hbar) ** (-d / 2.0)
    for k in range(0, Z.shape[0], chunk):
        block = gaussian_batch(Z[k:k + chunk], gamma, psi.hbar, psi.grid)
        out[k:k + chunk] = pref * (np.conj(block) @ wpsi)
    return out


def fb_inverse(field: np.ndarray, zgrid: PhaseGrid, gamma: SiegelMatrix,
               grid: GridSpec, hbar: float, chunk: int = 256) -> WaveFunction:
    """Resynthesize (2 pi hbar)^{-d/2} sum w field(z) phi_z^Gamma on the grid.

    Composed with fb_transform this reproduces psi up to quadrature error. A
    coverage below the grid's configured target only warns; the result is still
    returned (flagged in .info).
    """
    field = np.asarray(field, dtype=complex)
    if field.shape != (zgrid.node_count,):
        raise ValueError("field must be sampled on the phase grid nodes")
    target = zgrid.coverage_target
    flagged = target is not None and zgrid.coverage < target
    if flagged:
        warnings.warn(
            f"phase-grid coverage {zgrid.coverage:.12f} below target {target:.12f}",
            CoverageWarning)
    d = grid.dim
    acc = np.zeros(int(np.prod(grid.shape)), dtype=complex)
    coeff = zgrid.weights * field
    for k in range(0, zgrid.node_count, chunk):
        block = gaussian_batch(zgrid.nodes[k:k + chunk], gamma, hbar, grid)
        acc += coeff[k:k + chunk] @ block
    acc *= (2.0 * np.pi * hbar) ** (-d / 2.0)
    info = {"coverage": zgrid.coverage, "coverage_ok": not flagged}
    return WaveFunction(grid, acc.reshape(grid.shape), hbar, info=info)


def _phase_grid_on_box(center: np.ndarray, half: np.ndarray, spacing_target: float):
    counts = np.maximum(2, np.ceil(2.0 * half / spacing_target).astype(int) + 1)
    axes = [center[i] + np.linspace(-half[i], half[i], counts[i])
            for i in range(center.size)]
    spacing = np.array([ax[1] - ax[0] for ax in axes])
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    per_axis = []
    for i in range(center.size):
        w = np.full(counts[i], spacing[i])
        w[0] *= 0.5
        w[-1] *= 0.5
        per_axis.append(w)
    weights = reduce(np.multiply.outer, per_axis).ravel()
    return nodes, weights, tuple(int(c) for c in counts), spacing


def _captured_fraction(psi: WaveFunction, gamma: SiegelMatrix, nodes, weights) -> float:
    zg = PhaseGrid(nodes, weights, coverage=1.0)
    coeffs = fb_transform(psi, gamma, zg)
    mass = float(np.sum(weights * np.abs(coeffs) ** 2))
    return mass / psi.l2_norm() ** 2


def build_quadrature(psi0: WaveFunction, gamma: SiegelMatrix,
                     coverage_target: float = 1.0 - 1e-8, density: float = 6.0,
                     pad: float = 2.0, max_radius: float = 40.0,
                     probe_density: float = 2.5) -> PhaseGrid:
    """Centered trapezoid phase-space grid capturing the input's FB mass.

    The box is grown from moment estimates until the captured mass fraction
    reaches coverage_target, then padded by pad * sqrt(hbar) per side (tail mass
    alone leaves an L2 synthesis error of about sqrt(tail), so the pad buys the
    extra digits needed by the 1e-6 round trips). Node spacing is at most
    sqrt(hbar) / density.

    Raises QuadratureError when the box search exceeds max_radius.
    """
    if not 0.0 < coverage_target < 1.0:
        raise ValueError("coverage_target must lie in (0, 1)")
    if density <= 0:
        raise ValueError("density must be positive")
    d = psi0.dim
    hbar = psi0.hbar
    w = psi0.grid.weights()
    prob = np.abs(psi0.flat()) ** 2 * w
    total = prob.sum()
    X = psi0.grid.points()
    q_mean = (prob @ X) / total
    q_var = (prob @ (X - q_mean) ** 2) / total

    # Momentum moments from the discrete spectrum.
    spec = np.abs(np.fft.fftn(psi0.values)) ** 2
    p_mean = np.empty(d)
    p_var = np.empty(d)
    for i in range(d):
        other = tuple(j for j in range(d) if j != i)
        marg = spec.sum(axis=other) if other else spec
        xi = 2.0 * np.pi * hbar * np.fft.fftfreq(psi0.grid.shape[i], d=psi0.grid.spacing[i])
        m = marg.sum()
        p_mean[i] = (marg @ xi) / m
        p_var[i] = (marg @ (xi - p_mean[i]) ** 2) / m

    lam = np.linalg.eigvalsh(gamma.imag)
    sig_q = np.sqrt(q_var + hbar / lam.min())
    sig_p = np.sqrt(p_var + hbar * lam.max())
    center = np.concatenate([q_mean, p_mean])
    sigma = np.concatenate([sig_q, sig_p])

    probe_spacing = np.sqrt(hbar) / max(probe_density, 1.0)
    scale = 3.0
    captured = 0.0
    half = scale * sigma
    while True:
        half = scale * sigma
        if np.any(half > max_radius):
            raise QuadratureError(
                f"coverage search exceeded max_radius={max_radius} "
                f"(coverage reached {captured:.12f} of target {coverage_target:.12f})")
        nodes, weights, _, _ = _phase_grid_on_box(center, half, probe_spacing)
        captured = _captured_fraction(psi0, gamma, nodes, weights)
        if captured >= coverage_target:
            break
        scale *= 1.25

    half = half + pad * np.sqrt(hbar)
    if np.any(half > max_radius):
        raise QuadratureError(f"padded box exceeds max_radius={max_radius}")
    nodes, weights, shape, _ = _phase_grid_on_box(center, half, np.sqrt(hbar) / density)
    coverage = _captured_fraction(psi0, gamma, nodes, weights)
    return PhaseGrid(nodes=nodes, weights=weights, coverage=coverage,
                     coverage_target=coverage_target, center=tuple(center),
                     half_widths=tuple(half), shape=shape)


def gamma_update(state, gamma0: SiegelMatrix) -> SiegelMatrix:
    """Width-matrix update Gamma_t = (C + Gamma0 D)(A + Gamma0 B)^{-1}.

    Accepts a FlowState (or any object with A, B, C, D blocks). The result is
    symmetrized and must pass the positive-imaginary test; failure indicates
    upstream symplecticity loss.
    """
    G0 = gamma0.entries
    num = state.C + G0 @ state.D
    den = state.A + G0 @ state.B
    out = np.linalg.solve(den.T, num.T).T
    try:
        return SiegelMatrix(out)
    except SiegelError as exc:
        raise SiegelError(f"width update left the Siegel class: {exc}") from exc


def gamma_update_blocks(A, B, C, D, gamma0: SiegelMatrix) -> np.ndarray:
    """Batched width update on raw (n, d, d) blocks; returns (n, d, d)."""
    G0 = gamma0.entries
    num = C + G0[None] @ D
    den = A + G0[None] @ B
    out = np.linalg.solve(np.swapaxes(den, -1, -2), np.swapaxes(num, -1, -2))
    out = np.swapaxes(out, -1, -2)
    out = 0.5 * (out + np.swapaxes(out, -1, -2))
    eigs = np.linalg.eigvalsh(out.imag)
    if eigs.min() <= _PD_TOL:
        bad = int(np.argmin(eigs.min(axis=-1)))
        raise SiegelError(f"width update failed positivity at node {bad}")
    return out
