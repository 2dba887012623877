"""Linear fractional representation of the bilinear dynamics and the
structured multiplier class that characterizes the uncertainty I_m (x) z.

The bilinearity is pulled out through the channel w = (I_m (x) z) u = u (x) z,
leaving a linear system in feedback with the repeated-vector uncertainty.
The multiplier class is tight: membership in the induced uncertainty set is
equivalent to the repeated-vector structure with z inside the region, and
`find_violating_multiplier` reproduces the constructive three-stage argument
behind the "only if" direction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .matrixcore import kron, min_eig, symmetrize
from .model import BilinearSystem, RegionSpec


@dataclass(frozen=True)
class OpenLoopLFR:
    """Open-loop LFR top block [[A, B0, Btilde], [0, I, 0]] with w = (I_m (x) z) u."""

    top: np.ndarray
    N: int
    m: int

    def step(self, z: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Evaluate z+ through the LFR channel (must match the bilinear update)."""
        z = np.asarray(z, dtype=float).reshape(self.N)
        u = np.asarray(u, dtype=float).reshape(self.m)
        w = np.kron(u, z)
        out = self.top @ np.concatenate([z, u, w])
        return out[: self.N]


def build_lfr(system: BilinearSystem) -> OpenLoopLFR:
    N, m = system.N, system.m
    top = np.block([
        [system.A, system.B0, system.Btilde],
        [np.zeros((m, N)), np.eye(m), np.zeros((m, N * m))],
    ])
    return OpenLoopLFR(top=top, N=N, m=m)


@dataclass(frozen=True)
class Multiplier:
    """A PSD matrix Lambda selecting one member of the multiplier class."""

    Lambda: np.ndarray

    def __post_init__(self):
        lam = symmetrize(self.Lambda, "Lambda")
        if min_eig(lam) < -1e-10 * (1.0 + np.abs(lam).max(initial=0.0)):
            raise ValueError("multiplier must be positive semidefinite")
        object.__setattr__(self, "Lambda", lam)

    @property
    def m(self) -> int:
        return self.Lambda.shape[0]


def pi_delta(region: RegionSpec, lam: Multiplier | np.ndarray) -> np.ndarray:
    """Multiplier matrix [[Lam (x) Qz, Lam (x) Sz], [Lam (x) Sz^T, Lam (x) Rz]]."""
    L = lam.Lambda if isinstance(lam, Multiplier) else np.asarray(lam, dtype=float)
    return np.block([
        [kron(L, region.Qz), kron(L, region.Sz)],
        [kron(L, region.Sz.T), kron(L, region.Rz)],
    ])


def pi_delta_inverse(region: RegionSpec, lambda_tilde: np.ndarray) -> np.ndarray:
    """Inverse multiplier built from the inverse blocks and Lambda_tilde = Lambda^{-1}."""
    Lt = symmetrize(lambda_tilde, "lambda_tilde")
    if min_eig(Lt) <= 0:
        raise ValueError("lambda_tilde must be positive definite")
    return np.block([
        [kron(Lt, region.Qzt), kron(Lt, region.Szt)],
        [kron(Lt, region.Szt.T), kron(Lt, region.Rzt)],
    ])


def membership_form(z: np.ndarray, region: RegionSpec, lam: Multiplier | np.ndarray) -> np.ndarray:
    """[Delta; I]^T Pi_Delta [Delta; I] for Delta = I_m (x) z.

    Collapses to Lambda times the scalar region form of z, hence PSD exactly
    when z lies in the region (for Lambda PSD).
    """
    L = lam.Lambda if isinstance(lam, Multiplier) else np.asarray(lam, dtype=float)
    m = L.shape[0]
    z = np.asarray(z, dtype=float).reshape(region.N)
    delta = np.kron(np.eye(m), z.reshape(-1, 1))
    return _delta_form(delta, region, L)


def _delta_form(delta: np.ndarray, region: RegionSpec, L: np.ndarray) -> np.ndarray:
    stack = np.vstack([delta, np.eye(L.shape[0])])
    return stack.T @ pi_delta(region, L) @ stack


def find_violating_multiplier(delta: np.ndarray, region: RegionSpec,
                              tol: Optional[float] = None) -> Optional[Multiplier]:
    """Search the three constructive multiplier families for a witness that
    delta is not of the form I_m (x) z with z in the region.

    Stage 1: Lambda = e_k e_k^T exposes entries outside the block-diagonal
    structure. Stage 2: Lambda = (e_i - e_k)(e_i - e_k)^T exposes mismatched
    repeated vectors. Stage 3: Lambda = I exposes z outside the region.
    Returns the first violating multiplier, or None if delta is a member.
    """
    delta = np.asarray(delta, dtype=float)
    N = region.N
    if delta.ndim != 2 or delta.shape[0] % N != 0:
        raise ValueError(f"delta must be (m*{N}) x m")
    m = delta.shape[1]
    if delta.shape != (m * N, m):
        raise ValueError(f"delta must be {m * N} x {m}, got {delta.shape}")
    if tol is None:
        scale = 1.0 + max(np.abs(delta).max(initial=0.0), np.abs(region.block).max())
        tol = 1e-8 * scale

    candidates: list[np.ndarray] = []
    eye = np.eye(m)
    for k in range(m):
        candidates.append(np.outer(eye[k], eye[k]))
    for i in range(m):
        for k in range(i + 1, m):
            d = eye[i] - eye[k]
            candidates.append(np.outer(d, d))
    candidates.append(np.eye(m))

    for L in candidates:
        if min_eig(_delta_form(delta, region, L)) < -tol:
            return Multiplier(Lambda=L)
    return None


@dataclass(frozen=True)
class PermutationT:
    """Row selector rearranging Lambda (x) region-block coordinates; unitary."""

    T: np.ndarray


def permutation_T(m: int, N: int) -> PermutationT:
    if m < 1 or N < 1:
        raise ValueError("m and N must be >= 1")
    top = np.kron(np.eye(m), np.hstack([np.eye(N), np.zeros((N, 1))]))
    bottom = np.kron(np.eye(m), np.hstack([np.zeros((1, N)), np.ones((1, 1))]))
    T = np.vstack([top, bottom])
    if not np.allclose(T @ T.T, np.eye(T.shape[0]), atol=1e-12):
        raise AssertionError("selector matrix is not unitary")  # pragma: no cover
    return PermutationT(T=T)
