"""Symmetric eigendecomposition by cyclic Jacobi rotations and PSD square roots."""

from __future__ import annotations

import logging

import numpy as np

logger = logging.getLogger(__name__)

#: eigenvalues above ``-NEG_EIG_TOL`` are treated as zero by :func:`matrix_sqrt_psd`
NEG_EIG_TOL = 1e-8


class ConvergenceError(RuntimeError):
    def __init__(self, sweeps: int, off: float):
        super().__init__(f"Jacobi iteration did not converge after {sweeps} sweeps "
                         f"(off-diagonal norm {off:.3e})")
        self.sweeps = sweeps
        self.off = off


class ClampCounter:
    """Counts how many negative eigenvalues were clamped to zero."""

    def __init__(self):
        self.count = 0

    def reset(self):
        self.count = 0


clamp_counter = ClampCounter()


def _check_symmetric(A: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    asym = np.max(np.abs(A - A.T), initial=0.0)
    if asym > tol * max(1.0, np.max(np.abs(A), initial=0.0)):
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    return 0.5 * (A + A.T)


def sym_eigen(A, max_sweeps: int = 100, tol: float = 1e-15):
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.

    Columns of the returned ``V`` are eigenvectors, ``A = V diag(w) V^T``.
    """
    A = _check_symmetric(A).copy()
    n = A.shape[0]
    V = np.eye(n)
    scale = np.linalg.norm(A)
    if n < 2 or scale == 0.0:
        w = np.diag(A).copy()
        order = np.argsort(w, kind="stable")
        return w[order], V[:, order]

    for sweep in range(1, max_sweeps + 1):
        off = np.sqrt(np.sum(np.triu(A, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    # theta^2 would overflow; t -> 1 / (2 theta) in this limit
                    t = 0.5 / theta
                else:
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) Givens rotation
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap = A[p, :].copy()
                aq = A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        off = np.sqrt(np.sum(np.triu(A, 1) ** 2))
        if off > tol * scale * 1e3:
            raise ConvergenceError(max_sweeps, off)

    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def matrix_sqrt_psd(A, tol: float = NEG_EIG_TOL) -> np.ndarray:
    """Symmetric square root of a positive semi-definite matrix.

    Eigenvalues in ``[-tol, 0)`` (relative to the largest magnitude when that
    exceeds one) are clamped to zero and counted in :data:`clamp_counter`.
    """
    w, V = sym_eigen(A)
    limit = tol * max(1.0, np.max(np.abs(w), initial=0.0))
    if np.any(w < -limit):
        raise ValueError(f"matrix is indefinite (min eigenvalue {w.min():.3e})")
    neg = w < 0
    if np.any(neg):
        clamp_counter.count += int(neg.sum())
        logger.debug("clamped %d negative eigenvalues", int(neg.sum()))
        w = np.where(neg, 0.0, w)
    R = (V * np.sqrt(w)) @ V.T
    return 0.5 * (R + R.T)
