"""Problem data model: bilinear dynamics, operating region, performance channel.

The JSON problem schema is::

    {
      "system": {"A": [[...]], "B0": [[...]], "B": [[[...]], ...]},
      "region": {"Qz": [[...]], "Sz": [[...]], "Rz": [[...]]}  |  {"ball": c},
      "performance": {
        "Bp": [[...]], "Cp": [[...]], "Dpu": [[...]], "Dpuz": [[...]], "Dpw": [[...]],
        "index": {"gamma": g}  |  {"Qp": [[...]], "Sp": [[...]], "Rp": [[...]]}
      }
    }

"B" may be replaced by "Btilde" (the horizontal stack [B_1 ... B_m]).
All numbers are IEEE doubles. Everything is immutable after validation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .matrixcore import MatrixError, as_matrix, max_eig, min_eig, symmetrize


class ValidationError(ValueError):
    """A problem file or matrix set violates the model invariants."""


INVERSE_TOL = 1e-9


@dataclass(frozen=True)
class BilinearSystem:
    """Dynamics z+ = A z + B0 u + sum_j u_j B_j z."""

    A: np.ndarray
    B0: np.ndarray
    B_list: tuple[np.ndarray, ...]

    @property
    def N(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B0.shape[1]

    @property
    def Btilde(self) -> np.ndarray:
        """Horizontal stack [B_1 ... B_m], shape N x (N*m)."""
        return np.hstack(self.B_list)

    def step(self, z: np.ndarray, u: np.ndarray) -> np.ndarray:
        """One open-loop update via the B_j summation form."""
        z = np.asarray(z, dtype=float).reshape(self.N)
        u = np.asarray(u, dtype=float).reshape(self.m)
        acc = self.A @ z + self.B0 @ u
        for j, Bj in enumerate(self.B_list):
            acc = acc + u[j] * (Bj @ z)
        return acc


@dataclass(frozen=True)
class RegionSpec:
    """Quadratic region [z;1]^T [[Qz,Sz],[Sz^T,Rz]] [z;1] >= 0 with cached inverse blocks."""

    Qz: np.ndarray
    Sz: np.ndarray
    Rz: np.ndarray
    Qzt: np.ndarray = field(repr=False)
    Szt: np.ndarray = field(repr=False)
    Rzt: np.ndarray = field(repr=False)
    Shat: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.Qz.shape[0]

    @property
    def block(self) -> np.ndarray:
        return np.block([[self.Qz, self.Sz], [self.Sz.T, self.Rz]])

    @property
    def inverse_block(self) -> np.ndarray:
        return np.block([[self.Qzt, self.Szt], [self.Szt.T, self.Rzt]])

    @property
    def radius_sq(self) -> float:
        """Rz as a scalar (region size knob for ball-like regions)."""
        return float(self.Rz[0, 0])

    def quad_form(self, z: np.ndarray) -> float:
        """The defining quadratic form; >= 0 iff z is in the region."""
        v = np.append(np.asarray(z, dtype=float).reshape(self.N), 1.0)
        return float(v @ self.block @ v)

    def contains(self, z: np.ndarray, tol: float = 0.0) -> bool:
        return self.quad_form(z) >= -tol


@dataclass(frozen=True)
class PerformanceChannel:
    """Disturbance-to-output channel of the performance-extended dynamics."""

    Bp: np.ndarray
    Cp: np.ndarray
    Dpu: np.ndarray
    Dpuz: np.ndarray
    Dpw: np.ndarray

    @property
    def q(self) -> int:
        return self.Bp.shape[1]

    @property
    def p(self) -> int:
        return self.Cp.shape[0]


@dataclass(frozen=True)
class PerformanceSpec:
    """Quadratic performance index blocks with cached inverse blocks.

    gamma_mode marks the L2-gain parameterization Qp=-gamma^2 I, Sp=0, Rp=I;
    in that mode the index is rebuilt for each requested gamma.
    """

    Qp: np.ndarray
    Sp: np.ndarray
    Rp: np.ndarray
    Qpt: np.ndarray = field(repr=False)
    Spt: np.ndarray = field(repr=False)
    Rpt: np.ndarray = field(repr=False)
    gamma_mode: bool = False
    gamma: Optional[float] = None

    @property
    def q(self) -> int:
        return self.Qp.shape[0]

    @property
    def p(self) -> int:
        return self.Rp.shape[0]

    @property
    def index_block(self) -> np.ndarray:
        return np.block([[self.Qp, self.Sp], [self.Sp.T, self.Rp]])

    def supply_rate(self, wp: np.ndarray, zp: np.ndarray) -> float:
        v = np.concatenate([np.atleast_1d(np.asarray(wp, dtype=float)),
                            np.atleast_1d(np.asarray(zp, dtype=float))])
        return float(v @ self.index_block @ v)


@dataclass(frozen=True)
class Problem:
    """A validated synthesis problem."""

    system: BilinearSystem
    region: RegionSpec
    channel: Optional[PerformanceChannel] = None
    performance: Optional[PerformanceSpec] = None

    @property
    def has_performance(self) -> bool:
        return self.channel is not None

    @property
    def scale(self) -> float:
        """Largest data magnitude; reference for strictness and tolerances."""
        mats = [self.system.A, self.system.B0, self.system.Btilde,
                self.region.Qz, self.region.Sz, self.region.Rz]
        if self.channel is not None:
            mats += [self.channel.Bp, self.channel.Cp, self.channel.Dpu,
                     self.channel.Dpuz, self.channel.Dpw]
        return max(1.0, *(float(np.abs(M).max(initial=0.0)) for M in mats))

    def with_region(self, region: RegionSpec) -> "Problem":
        return replace(self, region=region)


def make_system(A, B0, B_list) -> BilinearSystem:
    A = as_matrix(A, "A")
    B0 = as_matrix(B0, "B0")
    N = A.shape[0]
    if A.shape != (N, N):
        raise ValidationError(f"A must be square, got {A.shape}")
    if B0.shape[0] != N:
        raise ValidationError(f"B0 must have {N} rows, got {B0.shape}")
    m = B0.shape[1]
    if m < 1:
        raise ValidationError("m must be >= 1 (B0 needs at least one column)")
    if len(B_list) == 0:
        raise ValidationError("m must be >= 1 (B_list is empty)")
    if len(B_list) != m:
        raise ValidationError(f"expected {m} bilinear matrices, got {len(B_list)}")
    Bs = []
    for j, Bj in enumerate(B_list):
        Bj = as_matrix(Bj, f"B[{j}]")
        if Bj.shape != (N, N):
            raise ValidationError(f"B[{j}] must be {N}x{N}, got {Bj.shape}")
        Bs.append(Bj)
    return BilinearSystem(A=A, B0=B0, B_list=tuple(Bs))


def make_region(Qz, Sz, Rz) -> RegionSpec:
    Qz = symmetrize(as_matrix(Qz, "Qz"), "Qz")
    Sz = as_matrix(Sz, "Sz")
    Rz = as_matrix(Rz, "Rz")
    N = Qz.shape[0]
    if Sz.shape != (N, 1):
        raise ValidationError(f"Sz must be {N}x1, got {Sz.shape}")
    if Rz.shape != (1, 1):
        raise ValidationError(f"Rz must be 1x1, got {Rz.shape}")
    if max_eig(Qz) >= 0:
        raise ValidationError("Qz must be negative definite")
    if Rz[0, 0] <= 0:
        raise ValidationError("region block singular or indefinite: Rz must be positive definite")
    block = np.block([[Qz, Sz], [Sz.T, Rz]])
    try:
        inv = np.linalg.inv(block)
    except np.linalg.LinAlgError as exc:
        raise ValidationError(f"region block singular: {exc}") from exc
    resid = np.abs(inv @ block - np.eye(N + 1)).max()
    if resid > INVERSE_TOL:
        raise ValidationError(f"region block is numerically singular (inverse residual {resid:.3e})")
    inv = 0.5 * (inv + inv.T)
    Qzt = inv[:N, :N]
    Szt = inv[:N, N:]
    Rzt = inv[N:, N:]
    Shat = np.linalg.solve(Qzt, Szt)
    return RegionSpec(Qz=Qz, Sz=Sz, Rz=Rz, Qzt=Qzt, Szt=Szt, Rzt=Rzt, Shat=Shat)


def ball_region(N: int, radius_sq: float) -> RegionSpec:
    """Region z^T z <= radius_sq, i.e. Qz = -I, Sz = 0, Rz = radius_sq."""
    if radius_sq <= 0:
        raise ValidationError("radius_sq must be positive")
    return make_region(-np.eye(N), np.zeros((N, 1)), np.array([[float(radius_sq)]]))


def l2_gain_index(gamma: float, q: int, p: int) -> PerformanceSpec:
    """Index Qp = -gamma^2 I, Sp = 0, Rp = I encoding an L2-gain bound gamma."""
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    g2 = float(gamma) ** 2
    return PerformanceSpec(
        Qp=-g2 * np.eye(q), Sp=np.zeros((q, p)), Rp=np.eye(p),
        Qpt=-np.eye(q) / g2, Spt=np.zeros((q, p)), Rpt=np.eye(p),
        gamma_mode=True, gamma=float(gamma),
    )


def make_performance_index(Qp, Sp, Rp) -> PerformanceSpec:
    Qp = symmetrize(as_matrix(Qp, "Qp"), "Qp")
    Rp = symmetrize(as_matrix(Rp, "Rp"), "Rp")
    Sp = as_matrix(Sp, "Sp")
    q, p = Qp.shape[0], Rp.shape[0]
    if Sp.shape != (q, p):
        raise ValidationError(f"Sp must be {q}x{p}, got {Sp.shape}")
    if max_eig(Qp) >= 0:
        raise ValidationError("Qp must be negative definite")
    if min_eig(Rp) < 0:
        raise ValidationError("Rp must be positive semidefinite")
    block = np.block([[Qp, Sp], [Sp.T, Rp]])
    try:
        inv = np.linalg.inv(block)
    except np.linalg.LinAlgError as exc:
        raise ValidationError(f"performance index singular: {exc}") from exc
    resid = np.abs(inv @ block - np.eye(q + p)).max()
    if resid > INVERSE_TOL:
        raise ValidationError(f"performance index numerically singular (residual {resid:.3e})")
    inv = 0.5 * (inv + inv.T)
    return PerformanceSpec(Qp=Qp, Sp=Sp, Rp=Rp,
                           Qpt=inv[:q, :q], Spt=inv[:q, q:], Rpt=inv[q:, q:])


def make_channel(system: BilinearSystem, Bp, Cp, Dpu=None, Dpuz=None, Dpw=None) -> PerformanceChannel:
    N, m = system.N, system.m
    Bp = as_matrix(Bp, "Bp")
    Cp = as_matrix(Cp, "Cp")
    if Bp.shape[0] != N:
        raise ValidationError(f"Bp must have {N} rows, got {Bp.shape}")
    if Cp.shape[1] != N:
        raise ValidationError(f"Cp must have {N} columns, got {Cp.shape}")
    q, p = Bp.shape[1], Cp.shape[0]
    Dpu = np.zeros((p, m)) if Dpu is None else as_matrix(Dpu, "Dpu")
    Dpuz = np.zeros((p, N * m)) if Dpuz is None else as_matrix(Dpuz, "Dpuz")
    Dpw = np.zeros((p, q)) if Dpw is None else as_matrix(Dpw, "Dpw")
    if Dpu.shape != (p, m):
        raise ValidationError(f"Dpu must be {p}x{m}, got {Dpu.shape}")
    if Dpuz.shape != (p, N * m):
        raise ValidationError(f"Dpuz must be {p}x{N * m}, got {Dpuz.shape}")
    if Dpw.shape != (p, q):
        raise ValidationError(f"Dpw must be {p}x{q}, got {Dpw.shape}")
    return PerformanceChannel(Bp=Bp, Cp=Cp, Dpu=Dpu, Dpuz=Dpuz, Dpw=Dpw)


def validate(system: BilinearSystem, region: RegionSpec,
             channel: Optional[PerformanceChannel] = None,
             performance: Optional[PerformanceSpec] = None) -> Problem:
    """Cross-check dimensions between parts and assemble a Problem."""
    if region.N != system.N:
        raise ValidationError(f"region dimension {region.N} != state dimension {system.N}")
    if channel is None and performance is not None:
        raise ValidationError("performance index given without a channel")
    if channel is not None:
        if performance is not None and (performance.q, performance.p) != (channel.q, channel.p):
            raise ValidationError(
                f"index dims ({performance.q},{performance.p}) != channel dims ({channel.q},{channel.p})")
    return Problem(system=system, region=region, channel=channel, performance=performance)


# ---------------------------------------------------------------------------
# dict / JSON round trip


def _mat(d: dict, key: str, context: str):
    if key not in d:
        raise ValidationError(f"{context}: missing field '{key}'")
    return d[key]


def problem_from_dict(data: dict) -> Problem:
    if not isinstance(data, dict):
        raise ValidationError("problem must be a JSON object")
    try:
        sysd = _mat(data, "system", "problem")
        A = as_matrix(_mat(sysd, "A", "system"), "A")
        B0 = as_matrix(_mat(sysd, "B0", "system"), "B0")
        m = B0.shape[1]
        N = A.shape[0]
        if "B" in sysd:
            B_list = sysd["B"]
        elif "Btilde" in sysd:
            Bt = as_matrix(sysd["Btilde"], "Btilde")
            if Bt.shape != (N, N * m):
                raise ValidationError(f"Btilde must be {N}x{N * m}, got {Bt.shape}")
            B_list = [Bt[:, j * N:(j + 1) * N] for j in range(m)]
        else:
            raise ValidationError("system: missing field 'B' (or 'Btilde')")
        system = make_system(A, B0, B_list)

        regd = _mat(data, "region", "problem")
        if "ball" in regd:
            region = ball_region(system.N, float(regd["ball"]))
        else:
            region = make_region(_mat(regd, "Qz", "region"), _mat(regd, "Sz", "region"),
                                 _mat(regd, "Rz", "region"))

        channel = None
        perf = None
        if data.get("performance") is not None:
            perfd = data["performance"]
            channel = make_channel(system,
                                   _mat(perfd, "Bp", "performance"),
                                   _mat(perfd, "Cp", "performance"),
                                   perfd.get("Dpu"), perfd.get("Dpuz"), perfd.get("Dpw"))
            idx = perfd.get("index", {})
            if "gamma" in idx:
                perf = l2_gain_index(float(idx["gamma"]), channel.q, channel.p)
            elif idx:
                perf = make_performance_index(_mat(idx, "Qp", "index"), _mat(idx, "Sp", "index"),
                                              _mat(idx, "Rp", "index"))
        return validate(system, region, channel, perf)
    except MatrixError as exc:
        raise ValidationError(str(exc)) from exc


def problem_to_dict(problem: Problem) -> dict:
    d: dict = {
        "system": {
            "A": problem.system.A.tolist(),
            "B0": problem.system.B0.tolist(),
            "B": [Bj.tolist() for Bj in problem.system.B_list],
        },
        "region": {
            "Qz": problem.region.Qz.tolist(),
            "Sz": problem.region.Sz.tolist(),
            "Rz": problem.region.Rz.tolist(),
        },
    }
    if problem.channel is not None:
        perfd: dict = {
            "Bp": problem.channel.Bp.tolist(),
            "Cp": problem.channel.Cp.tolist(),
            "Dpu": problem.channel.Dpu.tolist(),
            "Dpuz": problem.channel.Dpuz.tolist(),
            "Dpw": problem.channel.Dpw.tolist(),
        }
        if problem.performance is not None:
            if problem.performance.gamma_mode:
                perfd["index"] = {"gamma": problem.performance.gamma}
            else:
                perfd["index"] = {"Qp": problem.performance.Qp.tolist(),
                                  "Sp": problem.performance.Sp.tolist(),
                                  "Rp": problem.performance.Rp.tolist()}
        d["performance"] = perfd
    return d


def load_problem(path) -> Problem:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    return problem_from_dict(data)


def save_problem(problem: Problem, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(problem_to_dict(problem), fh, indent=2, sort_keys=True)
        fh.write("\n")
