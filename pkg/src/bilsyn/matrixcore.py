"""Dense matrix utilities shared by every other module.

All matrices are plain float ndarrays. Symmetric inputs are symmetrized
once on entry so downstream eigensolvers see exactly symmetric data.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg


class MatrixError(ValueError):
    """Raised on dimension mismatches, lost symmetry, or failed factorizations."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float array and require finite entries."""
    m = np.asarray(a, dtype=float)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise MatrixError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise MatrixError(f"{name} contains non-finite entries")
    return m


def symmetrize(m, name: str = "matrix") -> np.ndarray:
    """Return (M + M^T)/2 after checking M is symmetric up to round-off.

    Solver output carries interior-point round-off, so the tolerance is
    relative: 1e-12 * (1 + max|M|).
    """
    m = as_matrix(m, name)
    if m.shape[0] != m.shape[1]:
        raise MatrixError(f"{name} must be square, got {m.shape}")
    tol = 1e-12 * (1.0 + np.abs(m).max(initial=0.0))
    if np.abs(m - m.T).max(initial=0.0) > tol:
        raise MatrixError(f"{name} is not symmetric (max asymmetry {np.abs(m - m.T).max():.3e})")
    return 0.5 * (m + m.T)


def kron(a, b) -> np.ndarray:
    """Kronecker product; entry (i*p+k, j*q+l) = a[i,j]*b[k,l]."""
    return np.kron(as_matrix(a, "a"), as_matrix(b, "b"))


def min_eig(m) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    m = symmetrize(m)
    try:
        return float(np.linalg.eigvalsh(m)[0])
    except np.linalg.LinAlgError as exc:  # pragma: no cover - eigvalsh on finite input
        raise MatrixError(f"eigensolver failed: {exc}") from exc


def max_eig(m) -> float:
    """Largest eigenvalue of a symmetric matrix."""
    m = symmetrize(m)
    try:
        return float(np.linalg.eigvalsh(m)[-1])
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise MatrixError(f"eigensolver failed: {exc}") from exc


def is_pd(m, margin: float = 0.0) -> bool:
    """True iff min_eig(m) > margin. margin must be >= 0."""
    if margin < 0:
        raise MatrixError("margin must be nonnegative")
    return min_eig(m) > margin


def pd_margin(m) -> float:
    """Default definiteness buffer: 1e-7 relative to the largest entry."""
    m = as_matrix(m)
    return 1e-7 * (1.0 + np.abs(m).max(initial=0.0))


def schur_reduce(m, block_split: int) -> np.ndarray:
    """Schur complement of the trailing block: M11 - M12 M22^{-1} M12^T.

    M11 is block_split x block_split. Used only in verification
    cross-checks, never on the solver path. The trailing block must be
    invertible (PD in all uses here).
    """
    m = symmetrize(m)
    n = m.shape[0]
    if not 0 < block_split < n:
        raise MatrixError(f"block_split must be in (0, {n}), got {block_split}")
    m11 = m[:block_split, :block_split]
    m12 = m[:block_split, block_split:]
    m22 = m[block_split:, block_split:]
    try:
        x = scipy.linalg.solve(m22, m12.T, assume_a="sym")
    except scipy.linalg.LinAlgError as exc:
        raise MatrixError(f"trailing block is singular: {exc}") from exc
    return 0.5 * ((m11 - m12 @ x) + (m11 - m12 @ x).T)


def solve_spd(m, rhs) -> np.ndarray:
    """Solve m x = rhs for symmetric positive definite m via Cholesky.

    The residual is checked against 1e-10 * (1 + max|rhs|).
    """
    m = symmetrize(m)
    rhs = as_matrix(rhs, "rhs")
    if rhs.shape[0] != m.shape[0]:
        raise MatrixError(f"rhs has {rhs.shape[0]} rows, expected {m.shape[0]}")
    try:
        c, low = scipy.linalg.cho_factor(m)
    except scipy.linalg.LinAlgError as exc:
        raise MatrixError(f"matrix is not positive definite: {exc}") from exc
    x = scipy.linalg.cho_solve((c, low), rhs)
    resid = np.abs(m @ x - rhs).max(initial=0.0)
    if resid > 1e-10 * (1.0 + np.abs(rhs).max(initial=0.0)):
        raise MatrixError(f"SPD solve residual too large: {resid:.3e}")
    return x


def inv_spd(m) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix, symmetrized."""
    x = solve_spd(m, np.eye(as_matrix(m).shape[0]))
    return 0.5 * (x + x.T)
