"""Hamiltonian model bundle: evaluators, built-in examples, stability rate.

A model packages vectorized evaluators for H(t, X), its phase-space gradient and
Hessian, an optional subprincipal term H1, and (when H = T(p) + V(q)) the split
form used by the spectral reference solver. Phase points are arrays X = (q, p)
of shape (..., 2d).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "SplitForm",
    "HamiltonianModel",
    "StabilityBound",
    "make_model",
    "estimate_delta",
    "symplectic_matrix",
]


def symplectic_matrix(d: int) -> np.ndarray:
    """Standard symplectic J = [[0, I], [-I, 0]] acting on (q, p) blocks."""
    J = np.zeros((2 * d, 2 * d))
    J[:d, d:] = np.eye(d)
    J[d:, :d] = -np.eye(d)
    return J


@dataclass(frozen=True)
class SplitForm:
    """Kinetic/potential split H = T(p) + V(q) for the spectral solver.

    Both callables are vectorized: they map (..., d) arrays to (...) arrays.
    """

    kinetic: Callable[[np.ndarray], np.ndarray]
    potential: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class HamiltonianModel:
    """Evaluator bundle for a (sub)quadratic Hamiltonian.

    Attributes
    ----------
    kind : str
        Name of the built-in family (or "custom").
    dim : int
        Degrees of freedom d; phase space is R^{2d}.
    value, gradient, hessian : callables
        Vectorized evaluators taking (t, X) with X of shape (..., 2d) and
        returning shapes (...), (..., 2d) and (..., 2d, 2d) respectively.
    subprincipal : callable or None
        Optional H1(t, X); enters the propagator through exp(-i int H1 ds).
    split_form : SplitForm or None
        Present when H = T(p) + V(q).
    time_dependent : bool
        All built-ins are autonomous; custom models may flip this.
    params : dict
        Construction parameters, kept for config echo and worker rebuilds.
    """

    kind: str
    dim: int
    value: Callable[[float, np.ndarray], np.ndarray]
    gradient: Callable[[float, np.ndarray], np.ndarray]
    hessian: Callable[[float, np.ndarray], np.ndarray]
    subprincipal: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    split_form: Optional[SplitForm] = None
    time_dependent: bool = False
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StabilityBound:
    """Sampled bound delta = sup ||J Hess H|| over a phase-space box."""

    delta: float
    sample_box: tuple
    sample_count: int


def _split_qp(X: np.ndarray, d: int):
    X = np.asarray(X, dtype=float)
    return X[..., :d], X[..., d:]


def _harmonic(dim: int, omega: float) -> HamiltonianModel:
    w2 = omega * omega

    def value(t, X):
        q, p = _split_qp(X, dim)
        return 0.5 * (np.sum(p * p, axis=-1) + w2 * np.sum(q * q, axis=-1))

    def gradient(t, X):
        q, p = _split_qp(X, dim)
        return np.concatenate([w2 * q, p], axis=-1)

    def hessian(t, X):
        X = np.asarray(X, dtype=float)
        H = np.zeros(X.shape[:-1] + (2 * dim, 2 * dim))
        idx = np.arange(dim)
        H[..., idx, idx] = w2
        H[..., dim + idx, dim + idx] = 1.0
        return H

    split = SplitForm(
        kinetic=lambda xi: 0.5 * np.sum(np.asarray(xi) ** 2, axis=-1),
        potential=lambda x: 0.5 * w2 * np.sum(np.asarray(x) ** 2, axis=-1),
    )
    return HamiltonianModel("harmonic", dim, value, gradient, hessian,
                            split_form=split, params={"omega": omega})


def _free(dim: int) -> HamiltonianModel:
    def value(t, X):
        _, p = _split_qp(X, dim)
        return 0.5 * np.sum(p * p, axis=-1)

    def gradient(t, X):
        q, p = _split_qp(X, dim)
        return np.concatenate([np.zeros_like(q), p], axis=-1)

    def hessian(t, X):
        X = np.asarray(X, dtype=float)
        H = np.zeros(X.shape[:-1] + (2 * dim, 2 * dim))
        idx = np.arange(dim)
        H[..., dim + idx, dim + idx] = 1.0
        return H

    split = SplitForm(
        kinetic=lambda xi: 0.5 * np.sum(np.asarray(xi) ** 2, axis=-1),
        potential=lambda x: np.zeros(np.asarray(x).shape[:-1]),
    )
    return HamiltonianModel("free", dim, value, gradient, hessian,
                            split_form=split, params={})


def _quadratic_general(dim: int, G, L, K) -> HamiltonianModel:
    G = np.array(G, dtype=float)
    K = np.array(K, dtype=float)
    L = np.zeros((dim, dim)) if L is None else np.array(L, dtype=float)
    for name, M in (("G", G), ("K", K), ("L", L)):
        if M.shape != (dim, dim):
            raise ValueError(f"{name} must have shape ({dim}, {dim}), got {M.shape}")
    for name, M in (("G", G), ("K", K)):
        if not np.allclose(M, M.T, rtol=0, atol=1e-12):
            raise ValueError(f"{name} must be symmetric")

    # H = (G q.q + 2 L q.p + K p.p) / 2, Hessian [[G, L^T], [L, K]].
    hess_const = np.block([[G, L.T], [L, K]])

    def value(t, X):
        q, p = _split_qp(X, dim)
        return 0.5 * (np.einsum("...i,ij,...j->...", q, G, q)
                      + 2.0 * np.einsum("...i,ij,...j->...", p, L, q)
                      + np.einsum("...i,ij,...j->...", p, K, p))

    def gradient(t, X):
        q, p = _split_qp(X, dim)
        dq = q @ G.T + p @ L
        dp = q @ L.T + p @ K.T
        return np.concatenate([dq, dp], axis=-1)

    def hessian(t, X):
        X = np.asarray(X, dtype=float)
        return np.broadcast_to(hess_const, X.shape[:-1] + (2 * dim, 2 * dim)).copy()

    return HamiltonianModel("quadratic_general", dim, value, gradient, hessian,
                            params={"G": G.tolist(), "L": L.tolist(), "K": K.tolist()})


def _pendulum(dim: int) -> HamiltonianModel:
    def value(t, X):
        q, p = _split_qp(X, dim)
        return 0.5 * np.sum(p * p, axis=-1) - np.sum(np.cos(q), axis=-1)

    def gradient(t, X):
        q, p = _split_qp(X, dim)
        return np.concatenate([np.sin(q), p], axis=-1)

    def hessian(t, X):
        X = np.asarray(X, dtype=float)
        q = X[..., :dim]
        H = np.zeros(X.shape[:-1] + (2 * dim, 2 * dim))
        idx = np.arange(dim)
        H[..., idx, idx] = np.cos(q)
        H[..., dim + idx, dim + idx] = 1.0
        return H

    split = SplitForm(
        kinetic=lambda xi: 0.5 * np.sum(np.asarray(xi) ** 2, axis=-1),
        potential=lambda x: -np.sum(np.cos(np.asarray(x)), axis=-1),
    )
    return HamiltonianModel("pendulum", dim, value, gradient, hessian,
                            split_form=split, params={})


def _relativistic(dim: int, omega: float) -> HamiltonianModel:
    w2 = omega * omega

    def value(t, X):
        q, p = _split_qp(X, dim)
        return np.sqrt(1.0 + np.sum(p * p, axis=-1)) + 0.5 * w2 * np.sum(q * q, axis=-1)

    def gradient(t, X):
        q, p = _split_qp(X, dim)
        e = np.sqrt(1.0 + np.sum(p * p, axis=-1, keepdims=True))
        return np.concatenate([w2 * q, p / e], axis=-1)

    def hessian(t, X):
        X = np.asarray(X, dtype=float)
        p = X[..., dim:]
        e2 = 1.0 + np.sum(p * p, axis=-1)
        H = np.zeros(X.shape[:-1] + (2 * dim, 2 * dim))
        idx = np.arange(dim)
        H[..., idx, idx] = w2
        # d^2/dp^2 sqrt(1+|p|^2) = (I (1+|p|^2) - p p^T) / (1+|p|^2)^{3/2}
        pp = np.einsum("...i,...j->...ij", p, p)
        eye = np.eye(dim)
        block = (eye * e2[..., None, None] - pp) / (e2[..., None, None] ** 1.5)
        H[..., dim:, dim:] = block
        return H

    split = SplitForm(
        kinetic=lambda xi: np.sqrt(1.0 + np.sum(np.asarray(xi) ** 2, axis=-1)),
        potential=lambda x: 0.5 * w2 * np.sum(np.asarray(x) ** 2, axis=-1),
    )
    return HamiltonianModel("relativistic", dim, value, gradient, hessian,
                            split_form=split, params={"omega": omega})


_BUILDERS = {
    "harmonic": _harmonic,
    "free": _free,
    "quadratic_general": _quadratic_general,
    "pendulum": _pendulum,
    "relativistic": _relativistic,
}

_ALLOWED_PARAMS = {
    "harmonic": {"omega"},
    "free": set(),
    "quadratic_general": {"G", "L", "K"},
    "pendulum": set(),
    "relativistic": {"omega"},
}


def make_model(kind: str, dim: int = 1, subprincipal=None, **params) -> HamiltonianModel:
    """Build one of the built-in Hamiltonian models.

    Parameters
    ----------
    kind : {"harmonic", "free", "quadratic_general", "pendulum", "relativistic"}
        harmonic:          H = (|p|^2 + omega^2 |q|^2) / 2
        free:              H = |p|^2 / 2
        quadratic_general: H = (G q.q + 2 L q.p + K p.p) / 2 (G, K symmetric)
        pendulum:          H = |p|^2 / 2 - sum_i cos(q_i)
        relativistic:      H = sqrt(1 + |p|^2) + omega^2 |q|^2 / 2
    dim : int
        Degrees of freedom, must be positive.
    subprincipal : callable, optional
        H1(t, X) evaluator attached as-is (built-ins ship none).
    **params
        Family parameters: omega (harmonic, relativistic), G/L/K matrices
        (quadratic_general).

    Returns
    -------
    HamiltonianModel
        Immutable bundle with mutually consistent value/gradient/hessian and a
        split form for the families with H = T(p) + V(q).
    """
    if not isinstance(dim, (int, np.integer)) or dim <= 0:
        raise ValueError(f"dim must be a positive integer, got {dim!r}")
    if kind not in _BUILDERS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {sorted(_BUILDERS)}")
    unknown = set(params) - _ALLOWED_PARAMS[kind]
    if unknown:
        raise ValueError(f"unknown parameter(s) {sorted(unknown)} for model kind {kind!r}")

    if kind == "harmonic":
        model = _harmonic(dim, float(params.get("omega", 1.0)))
    elif kind == "free":
        model = _free(dim)
    elif kind == "quadratic_general":
        if "G" not in params or "K" not in params:
            raise ValueError("quadratic_general requires G and K matrices")
        model = _quadratic_general(dim, params["G"], params.get("L"), params["K"])
    elif kind == "pendulum":
        model = _pendulum(dim)
    else:
        model = _relativistic(dim, float(params.get("omega", 1.0)))

    if subprincipal is not None:
        model = HamiltonianModel(model.kind, model.dim, model.value, model.gradient,
                                 model.hessian, subprincipal=subprincipal,
                                 split_form=model.split_form, params=model.params)
    return model


def _spectral_norm_2x2(M: np.ndarray) -> np.ndarray:
    # Largest singular value of a batch of 2x2 matrices, in closed form.
    a, b = M[..., 0, 0], M[..., 0, 1]
    c, d = M[..., 1, 0], M[..., 1, 1]
    frob2 = a * a + b * b + c * c + d * d
    det = a * d - b * c
    gap = np.sqrt(np.maximum(frob2 * frob2 - 4.0 * det * det, 0.0))
    return np.sqrt(0.5 * (frob2 + gap))


def _spectral_norm_power(M: np.ndarray, tol: float = 1e-10, max_iter: int = 10000) -> np.ndarray:
    # Batched power iteration on M^T M with a deterministic start vector.
    n = M.shape[-1]
    G = np.einsum("...ki,...kj->...ij", M, M)
    v = 1.0 + 0.01 * np.arange(n)
    v = np.broadcast_to(v / np.linalg.norm(v), M.shape[:-2] + (n,)).copy()
    lam = np.zeros(M.shape[:-2])
    for _ in range(max_iter):
        w = np.einsum("...ij,...j->...i", G, v)
        new_lam = np.einsum("...i,...i->...", v, w)
        norms = np.linalg.norm(w, axis=-1)
        v = w / np.maximum(norms, 1e-300)
        if np.all(np.abs(new_lam - lam) <= tol * np.maximum(1.0, np.abs(new_lam))):
            lam = new_lam
            break
        lam = new_lam
    return np.sqrt(np.maximum(lam, 0.0))


def estimate_delta(model: HamiltonianModel, box, n: int, t: float = 0.0) -> StabilityBound:
    """Estimate delta = sup over a sampled box of ||J Hess H(t, X)||.

    Parameters
    ----------
    model : HamiltonianModel
    box : sequence of (lo, hi) pairs
        One interval per phase-space axis (2d entries).
    n : int
        Samples per axis, n >= 2.
    t : float
        Evaluation time for time-dependent models (built-ins ignore it).
    """
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    if len(box) != 2 * model.dim:
        raise ValueError(f"box must have {2 * model.dim} intervals, got {len(box)}")
    if any(hi < lo for lo, hi in box):
        raise ValueError("box intervals must satisfy lo <= hi")
    if n < 2:
        raise ValueError("need at least 2 samples per axis")

    axes = [np.linspace(lo, hi, n) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    X = np.stack([m.ravel() for m in mesh], axis=-1)
    H = model.hessian(t, X)
    J = symplectic_matrix(model.dim)
    M = np.einsum("ij,njk->nik", J, H)
    if model.dim == 1:
        norms = _spectral_norm_2x2(M)
    else:
        norms = _spectral_norm_power(M)
    return StabilityBound(delta=float(np.max(norms)), sample_box=box,
                          sample_count=X.shape[0])
