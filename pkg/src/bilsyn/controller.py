"""Extraction and evaluation of the synthesized controllers.

The gain-scheduled feedback is rational in the state:
u(z) = (I - Kw (I_m (x) z))^{-1} K z with K = L P^{-1} and
Kw = Lw (LambdaTilde^{-1} (x) Qzt^{-1}). Linear mode has Kw = 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .matrixcore import MatrixError, as_matrix, solve_spd
from .model import BilinearSystem, PerformanceChannel, RegionSpec
from .synthesis import SynthesisResult, SynthesisError

CONDITION_LIMIT = 1e12


class SingularityError(RuntimeError):
    """The scheduling feedback loop I - Kw (I_m (x) z) is numerically singular."""


@dataclass(frozen=True)
class RationalController:
    K: np.ndarray
    Kw: np.ndarray
    mode: str
    P: Optional[np.ndarray] = None
    LambdaTilde: Optional[np.ndarray] = None

    @property
    def m(self) -> int:
        return self.K.shape[0]

    @property
    def N(self) -> int:
        return self.K.shape[1]

    @property
    def is_linear(self) -> bool:
        return not np.any(self.Kw)


def extract(result: SynthesisResult, region: RegionSpec) -> RationalController:
    """Recover (K, Kw) from an accepted synthesis result.

    K solves K P = L; Kw solves Kw (LambdaTilde (x) Qzt) = Lw. Both use SPD
    factorizations (Qzt is negative definite, so the scheduling solve runs
    on the negated matrix).
    """
    if result.vars is None:
        raise SynthesisError("result carries no variables")
    v = result.vars
    try:
        K = solve_spd(v.P, v.L.T).T
    except MatrixError as exc:
        raise SynthesisError(f"P is numerically singular in an accepted result: {exc}") from exc
    if result.mode == "gain_scheduled" and np.any(v.Lw):
        kronLQ = np.kron(v.LambdaTilde, region.Qzt)
        try:
            Kw = -solve_spd(-kronLQ, v.Lw.T).T
        except MatrixError as exc:
            raise SynthesisError(
                f"multiplier is numerically singular in an accepted result: {exc}") from exc
    else:
        Kw = np.zeros_like(v.Lw)
    return RationalController(K=K, Kw=Kw, mode=result.mode, P=v.P.copy(),
                              LambdaTilde=v.LambdaTilde.copy())


def scheduling_matrix(ctrl: RationalController, z: np.ndarray) -> np.ndarray:
    """I - Kw (I_m (x) z), the m x m system solved by evaluate."""
    z = np.asarray(z, dtype=float).reshape(ctrl.N)
    delta = np.kron(np.eye(ctrl.m), z.reshape(-1, 1))
    return np.eye(ctrl.m) - ctrl.Kw @ delta


def evaluate(ctrl: RationalController, z: np.ndarray) -> np.ndarray:
    """u solving (I - Kw (I_m (x) z)) u = K z."""
    z = np.asarray(z, dtype=float).reshape(ctrl.N)
    G = scheduling_matrix(ctrl, z)
    if np.linalg.cond(G) > CONDITION_LIMIT:
        raise SingularityError(
            f"scheduling loop singular at z={z.tolist()} (cond > {CONDITION_LIMIT:g}); "
            "the feedback is only guaranteed well-posed inside the certified region")
    return np.linalg.solve(G, ctrl.K @ z)


def closed_loop_step(system: BilinearSystem, ctrl: RationalController, z: np.ndarray,
                     wp: Optional[np.ndarray] = None,
                     channel: Optional[PerformanceChannel] = None):
    """One closed-loop update; returns z_next, or (z_next, z_p) with a channel."""
    z = np.asarray(z, dtype=float).reshape(system.N)
    u = evaluate(ctrl, z)
    z_next = system.step(z, u)
    if channel is None:
        if wp is not None:
            raise ValueError("disturbance given but no performance channel")
        return z_next
    wp = np.zeros(channel.q) if wp is None else np.asarray(wp, dtype=float).reshape(channel.q)
    w = np.kron(u, z)
    z_next = z_next + channel.Bp @ wp
    z_p = channel.Cp @ z + channel.Dpu @ u + channel.Dpuz @ w + channel.Dpw @ wp
    return z_next, z_p


def controller_to_dict(ctrl: RationalController, region: Optional[RegionSpec] = None) -> dict:
    d = {
        "K": ctrl.K.tolist(),
        "Kw": ctrl.Kw.tolist(),
        "mode": ctrl.mode,
        "P": None if ctrl.P is None else ctrl.P.tolist(),
        "LambdaTilde": None if ctrl.LambdaTilde is None else ctrl.LambdaTilde.tolist(),
    }
    if region is not None:
        d["region"] = {"Qz": region.Qz.tolist(), "Sz": region.Sz.tolist(),
                       "Rz": region.Rz.tolist()}
    return d


def controller_from_dict(d: dict) -> RationalController:
    K = as_matrix(d["K"], "K")
    Kw = as_matrix(d["Kw"], "Kw")
    if Kw.shape != (K.shape[0], K.shape[0] * K.shape[1]):
        raise ValueError(f"Kw must be {K.shape[0]}x{K.shape[0] * K.shape[1]}, got {Kw.shape}")
    return RationalController(
        K=K, Kw=Kw, mode=d.get("mode", "gain_scheduled"),
        P=None if d.get("P") is None else as_matrix(d["P"], "P"),
        LambdaTilde=None if d.get("LambdaTilde") is None else as_matrix(d["LambdaTilde"], "LambdaTilde"))
