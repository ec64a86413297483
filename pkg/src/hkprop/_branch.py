"""Continuous tracking of complex square roots along determinant paths.

The tracked quantity is the unwound argument theta of the determinant path; the
square root is sqrt(|det|) exp(i theta / 2). A step is trustworthy only when the
determinant rotates by less than pi/2 between samples; callers refine their path
when that budget is exceeded.
"""

from __future__ import annotations

import numpy as np

from .errors import BranchAmbiguityError

MAX_STEP_ROTATION = 0.5 * np.pi


class SqrtTracker:
    """Branch-continuous sqrt over a batch of determinant paths."""

    def __init__(self, det0: np.ndarray, value0: np.ndarray):
        det0 = np.atleast_1d(np.asarray(det0, dtype=complex))
        value0 = np.atleast_1d(np.asarray(value0, dtype=complex))
        if det0.shape != value0.shape:
            raise ValueError("det0 and value0 must share a shape")
        if not np.allclose(value0 * value0, det0, rtol=1e-8, atol=1e-300):
            raise ValueError("value0 must be a square root of det0")
        self._det = det0
        self._theta = 2.0 * np.angle(value0)
        self.max_rotation = 0.0

    def update(self, det_new: np.ndarray) -> None:
        det_new = np.atleast_1d(np.asarray(det_new, dtype=complex))
        if np.any(np.abs(det_new) < 1e-300):
            raise BranchAmbiguityError("determinant path passed through zero")
        delta = np.angle(det_new * np.conj(self._det))
        self.max_rotation = max(self.max_rotation, float(np.max(np.abs(delta))))
        self._theta = self._theta + delta
        self._det = det_new

    @property
    def det(self) -> np.ndarray:
        return self._det

    @property
    def theta(self) -> np.ndarray:
        return self._theta

    def values(self) -> np.ndarray:
        return np.sqrt(np.abs(self._det)) * np.exp(0.5j * self._theta)

    def certified(self) -> bool:
        """True when every step stayed under the pi/2 rotation budget."""
        return self.max_rotation < MAX_STEP_ROTATION


def principal_sqrt_pd_real(W: np.ndarray) -> complex:
    """det^{1/2} of a complex symmetric matrix with positive-definite real part.

    Eigenvalues of such a matrix lie in the open right half plane, so the
    product of principal eigenvalue roots is the canonical analytic choice.
    """
    W = np.atleast_2d(np.asarray(W, dtype=complex))
    lam = np.linalg.eigvals(W)
    if np.any(lam.real <= 0):
        raise ValueError("matrix does not have its spectrum in the right half plane")
    return complex(np.prod(np.sqrt(lam)))
