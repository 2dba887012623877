"""Numerical certification and empirical evaluation of synthesis results.

The dual analysis inequality is rebuilt from the returned variables: with
Ptilde = P^{-1}, Lambda = LambdaTilde^{-1}, lambda = lambda_tilde^{-1},

    Xi = F^T diag(-Ptilde, Ptilde, Pi_Delta, lambda * Pi_p) F

where F stacks [I 0 0; Acl Bcl Bp; 0 I 0; K Kw 0; 0 0 I; Ccl Dcl Dpw]
over the (z, w, wp) directions. An accepted design must give Xi < 0; the
certificate extracts the largest common shift rho (and eps) keeping the
shifted Xi <= 0 and the disturbance budget delta for robust invariance of
the certified region.

Monte-Carlo loops derive all randomness from (seed, sample index), so the
results are identical under any execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .controller import (CONDITION_LIMIT, RationalController, SingularityError,
                         evaluate, extract)
from .lfr import pi_delta
from .matrixcore import inv_spd, max_eig, min_eig
from .model import Problem, ValidationError, ball_region
from .sdp_backend import SolverSettings
from .synthesis import (SynthesisResult, SynthesisError,
                        synthesize_performance, synthesize_stability)


class CertificateError(RuntimeError):
    """A claimed result fails its own analysis inequality."""


# ---------------------------------------------------------------------------
# dual analysis inequality


def build_xi(result: SynthesisResult, system, region, channel=None,
             gamma: Optional[float] = None,
             perf_index: Optional[np.ndarray] = None) -> np.ndarray:
    """Numeric dual inequality matrix at the result's variables.

    Without a channel this is the stability-only variant over (z, w); with a
    channel the performance variant over (z, w, wp). perf_index overrides
    the L2-gain index built from gamma.
    """
    if result.vars is None:
        raise SynthesisError("result carries no variables")
    v = result.vars
    N, m = system.N, system.m
    ctrl = extract(result, region)
    K, Kw = ctrl.K, ctrl.Kw
    Ptilde = inv_spd(v.P)
    Lambda = inv_spd(v.LambdaTilde)
    Acl = system.A + system.B0 @ K
    Bcl = system.Btilde + system.B0 @ Kw
    PiD = pi_delta(region, Lambda)

    if channel is None:
        F = np.block([
            [np.eye(N), np.zeros((N, m * N))],
            [Acl, Bcl],
            [np.zeros((m * N, N)), np.eye(m * N)],
            [K, Kw],
        ])
        mid = _blkdiag(-Ptilde, Ptilde, PiD)
        return F.T @ mid @ F

    if result.vars.lambda_tilde is None:
        raise SynthesisError("performance analysis needs lambda_tilde in the result")
    lam = 1.0 / result.vars.lambda_tilde
    p, q = channel.p, channel.q
    if perf_index is None:
        g = gamma if gamma is not None else result.gamma
        if g is None:
            raise ValidationError("no gamma available to build the performance index")
        perf_index = np.block([[-(g ** 2) * np.eye(q), np.zeros((q, p))],
                               [np.zeros((p, q)), np.eye(p)]])
    Ccl = channel.Cp + channel.Dpu @ K
    Dcl = channel.Dpuz + channel.Dpu @ Kw
    F = np.block([
        [np.eye(N), np.zeros((N, m * N)), np.zeros((N, q))],
        [Acl, Bcl, channel.Bp],
        [np.zeros((m * N, N)), np.eye(m * N), np.zeros((m * N, q))],
        [K, Kw, np.zeros((m, q))],
        [np.zeros((q, N)), np.zeros((q, m * N)), np.eye(q)],
        [Ccl, Dcl, channel.Dpw],
    ])
    mid = _blkdiag(-Ptilde, Ptilde, PiD, lam * perf_index)
    return F.T @ mid @ F


def _blkdiag(*mats: np.ndarray) -> np.ndarray:
    n = sum(M.shape[0] for M in mats)
    out = np.zeros((n, n))
    i = 0
    for M in mats:
        k = M.shape[0]
        out[i:i + k, i:i + k] = M
        i += k
    return out


@dataclass(frozen=True)
class Certificate:
    Ptilde: np.ndarray
    Lambda: np.ndarray
    Xi: np.ndarray
    xi_margin: float                  # max eigenvalue of Xi (must be < 0)
    rho: float
    eps: Optional[float] = None
    lam: Optional[float] = None
    delta: Optional[float] = None
    gamma: Optional[float] = None


def verify_certificate(result: SynthesisResult, problem: Problem,
                       alpha_inverse: Optional[Callable[[float], float]] = None) -> Certificate:
    """Rebuild Xi, extract the largest admissible (rho, eps) shift, and for
    performance results the robust-invariance disturbance budget delta.

    For the L2-gain supply rate the lower-bound function is alpha(s) =
    gamma^2 s, so delta = rho / (lam * gamma^2 * ||Ptilde||_2); other supply
    rates need the caller to pass alpha_inverse.
    """
    if result.vars is None:
        raise SynthesisError("result carries no variables")
    system, region = problem.system, problem.region
    performance = result.vars.lambda_tilde is not None and problem.channel is not None
    channel = problem.channel if performance else None
    perf_index = None
    if performance and result.gamma is None and problem.performance is not None:
        perf_index = problem.performance.index_block
    Xi = build_xi(result, system, region, channel=channel, gamma=result.gamma,
                  perf_index=perf_index)
    xi_margin = max_eig(Xi)
    if xi_margin >= 0:
        raise CertificateError(
            f"analysis inequality fails: max eig(Xi) = {xi_margin:.3e} >= 0 "
            "(solver and verifier disagree)")

    N = system.N
    q = channel.q if channel is not None else 0
    n = Xi.shape[0]
    shift_mask = np.zeros(n)
    shift_mask[:N] = 1.0
    if channel is not None:
        shift_mask[n - q:] = 1.0

    def shifted_ok(r: float) -> bool:
        return max_eig(Xi + np.diag(r * shift_mask)) <= 0.0

    lo = -xi_margin                  # always admissible: full-diagonal shift bound
    while lo < 1e12 and shifted_ok(lo * 2.0):
        lo *= 2.0
    hi = lo * 2.0
    while (hi - lo) > 1e-9 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if shifted_ok(mid):
            lo = mid
        else:
            hi = mid
    rho = lo

    Ptilde = inv_spd(result.vars.P)
    Lambda = inv_spd(result.vars.LambdaTilde)
    if not performance:
        return Certificate(Ptilde=Ptilde, Lambda=Lambda, Xi=Xi, xi_margin=xi_margin, rho=rho)

    lam = 1.0 / result.vars.lambda_tilde
    eps = rho
    pnorm = float(np.linalg.norm(Ptilde, 2))
    if alpha_inverse is not None:
        delta = alpha_inverse(rho / (lam * pnorm))
    elif result.gamma is not None:
        delta = rho / (lam * result.gamma ** 2 * pnorm)
    else:
        delta = None                 # general index without alpha: no budget formula
    return Certificate(Ptilde=Ptilde, Lambda=Lambda, Xi=Xi, xi_margin=xi_margin,
                       rho=rho, eps=eps, lam=lam, delta=delta, gamma=result.gamma)


# ---------------------------------------------------------------------------
# region-of-attraction checks


@dataclass(frozen=True)
class RoaReport:
    included: bool
    matrix_margin: float
    sample_violations: int
    samples: int


def verify_roa_inclusion(result: SynthesisResult, region, samples: int = 1000,
                         seed: int = 0) -> RoaReport:
    """Check the region-inclusion inequality at the returned nu and sample
    the certified boundary against the region's quadratic form."""
    if result.vars is None:
        raise SynthesisError("result carries no variables")
    v = result.vars
    Ptilde = inv_spd(v.P)
    M = region.block - v.nu * np.block([
        [-Ptilde, np.zeros((region.N, 1))],
        [np.zeros((1, region.N)), np.ones((1, 1))],
    ])
    margin = min_eig(M)
    tol = 1e-7 * (1.0 + np.abs(region.block).max())
    C = np.linalg.cholesky(0.5 * (v.P + v.P.T))
    rng = np.random.default_rng(seed)
    violations = 0
    for _ in range(samples):
        s = rng.standard_normal(region.N)
        s /= np.linalg.norm(s)
        z = C @ s                   # z^T P^{-1} z = 1
        if not region.contains(z, tol=tol):
            violations += 1
    return RoaReport(included=(margin >= -tol and violations == 0),
                     matrix_margin=margin, sample_violations=violations, samples=samples)


def sample_in_roa(P: np.ndarray, rng: np.random.Generator, boundary: bool = False,
                  chol: Optional[np.ndarray] = None) -> np.ndarray:
    """Uniform sample of the certified ellipsoid via the Cholesky image of
    a uniform ball sample (or of the unit sphere for boundary=True)."""
    N = P.shape[0]
    C = np.linalg.cholesky(0.5 * (P + P.T)) if chol is None else chol
    s = rng.standard_normal(N)
    norm = np.linalg.norm(s)
    if norm == 0.0:
        s = np.eye(N)[0]
        norm = 1.0
    s /= norm
    if not boundary:
        s *= rng.uniform() ** (1.0 / N)
    return C @ s


def sample_in_roa_batch(P: np.ndarray, count: int, seed: int,
                        boundary: bool = False) -> np.ndarray:
    """(count, N) ellipsoid samples; sample i is drawn from rng((seed, i))."""
    C = np.linalg.cholesky(0.5 * (P + P.T))
    return np.stack([sample_in_roa(P, np.random.default_rng((seed, i)),
                                   boundary=boundary, chol=C) for i in range(count)])


# ---------------------------------------------------------------------------
# batched closed-loop arithmetic (Monte-Carlo loops run over stacked states)


def batch_evaluate(ctrl: RationalController, Z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Controller outputs for stacked states Z (S, N).

    Returns (U, alive): U is (S, m); alive marks rows where the scheduling
    loop is well conditioned (others get u = 0 and must be discarded).
    """
    S = Z.shape[0]
    m, N = ctrl.m, ctrl.N
    Kw3 = ctrl.Kw.reshape(m, m, N)             # Kw (I_m (x) z) = einsum over blocks
    G = np.broadcast_to(np.eye(m), (S, m, m)) - np.einsum("ijk,sk->sij", Kw3, Z)
    alive = np.linalg.cond(G) <= CONDITION_LIMIT if m > 1 else (
        np.abs(G[:, 0, 0]) >= 1.0 / CONDITION_LIMIT)
    rhs = Z @ ctrl.K.T
    U = np.zeros((S, m))
    if np.any(alive):
        U[alive] = np.linalg.solve(G[alive], rhs[alive][..., None])[..., 0]
    return U, alive


def batch_closed_loop(system, ctrl: RationalController, Z: np.ndarray,
                      Wp: Optional[np.ndarray] = None, channel=None):
    """One closed-loop step for stacked states; returns (Znext, Zp, U, alive)."""
    U, alive = batch_evaluate(ctrl, Z)
    Znext = Z @ system.A.T + U @ system.B0.T
    for j, Bj in enumerate(system.B_list):
        Znext += U[:, j:j + 1] * (Z @ Bj.T)
    Zp = None
    if channel is not None:
        W = np.einsum("sj,sk->sjk", U, Z).reshape(Z.shape[0], -1)   # u (x) z
        Zp = Z @ channel.Cp.T + U @ channel.Dpu.T + W @ channel.Dpuz.T
        if Wp is not None:
            Znext = Znext + Wp @ channel.Bp.T
            Zp = Zp + Wp @ channel.Dpw.T
    elif Wp is not None:
        raise ValueError("disturbance given but no performance channel")
    return Znext, Zp, U, alive


@dataclass(frozen=True)
class DecreaseReport:
    samples: int
    violations: int
    worst_margin: float              # most positive Delta V observed (< 0 when all decrease)
    worst_z: Optional[np.ndarray]


def verify_lyapunov_decrease(result: SynthesisResult, system, ctrl: RationalController,
                             samples: int = 10000, seed: int = 0) -> DecreaseReport:
    """Sample Delta V over the certified region (origin excluded) and report
    any non-decrease."""
    if result.vars is None:
        raise SynthesisError("result carries no variables")
    P = result.vars.P
    Ptilde = inv_spd(P)
    Z = sample_in_roa_batch(P, samples, seed)
    V = np.einsum("si,ij,sj->s", Z, Ptilde, Z)
    keep = V >= 1e-12                # exclude the origin (Delta V = 0 there trivially)
    Z, V = Z[keep], V[keep]
    Znext, _, _, alive = batch_closed_loop(system, ctrl, Z)
    if not np.all(alive):
        bad = Z[~alive][0]
        return DecreaseReport(samples=int(keep.sum()), violations=int((~alive).sum()),
                              worst_margin=math.inf, worst_z=bad)
    dv = np.einsum("si,ij,sj->s", Znext, Ptilde, Znext) - V
    worst_idx = int(np.argmax(dv))
    return DecreaseReport(samples=int(keep.sum()), violations=int(np.sum(dv >= 0.0)),
                          worst_margin=float(dv[worst_idx]), worst_z=Z[worst_idx])


# ---------------------------------------------------------------------------
# simulation and empirical gain


@dataclass
class Trajectory:
    Z: np.ndarray                    # (steps+1, N)
    U: np.ndarray                    # (steps_run, m)
    Zp: Optional[np.ndarray]         # (steps_run, p) when a channel is present
    V: Optional[np.ndarray]          # (steps+1,) Lyapunov values when P is known
    truncated: bool = False
    error: Optional[str] = None

    @property
    def steps_run(self) -> int:
        return self.U.shape[0]


def simulate(system, ctrl: RationalController, z0, wp_sequence=None, steps: int = 200,
             channel=None, Ptilde: Optional[np.ndarray] = None) -> Trajectory:
    """Exact closed-loop rollout, recording inputs, outputs, and V(z_k).

    A singularity of the scheduling loop truncates the trajectory and sets
    the error flag instead of raising.
    """
    N = system.N
    z = np.asarray(z0, dtype=float).reshape(N)
    if Ptilde is None and ctrl.P is not None:
        Ptilde = inv_spd(ctrl.P)
    wp_seq = None
    if wp_sequence is not None:
        wp_seq = np.asarray(wp_sequence, dtype=float)
        if wp_seq.ndim == 1:
            wp_seq = wp_seq.reshape(-1, 1)
    Z = [z.copy()]
    U: List[np.ndarray] = []
    Zp: List[np.ndarray] = []
    error = None
    for k in range(steps):
        wp = None
        if wp_seq is not None:
            wp = wp_seq[k] if k < wp_seq.shape[0] else np.zeros(wp_seq.shape[1])
        try:
            u = evaluate(ctrl, z)
        except SingularityError as exc:
            error = str(exc)
            break
        z_next = system.step(z, u)
        if channel is not None:
            wp_k = np.zeros(channel.q) if wp is None else np.asarray(wp, dtype=float)
            z_next = z_next + channel.Bp @ wp_k
            Zp.append(channel.Cp @ z + channel.Dpu @ u
                      + channel.Dpuz @ np.kron(u, z) + channel.Dpw @ wp_k)
        elif wp is not None:
            raise ValueError("disturbance given but no performance channel")
        U.append(u)
        Z.append(z_next.copy())
        z = z_next
    Zarr = np.array(Z)
    V = None
    if Ptilde is not None:
        V = np.einsum("ki,ij,kj->k", Zarr, Ptilde, Zarr)
    Zp_arr = None
    if channel is not None:
        Zp_arr = np.array(Zp, dtype=float).reshape(len(Zp), channel.p)
    return Trajectory(Z=Zarr, U=np.array(U, dtype=float).reshape(len(U), ctrl.m),
                      Zp=Zp_arr, V=V, truncated=error is not None, error=error)


@dataclass(frozen=True)
class GainEstimate:
    gamma_lb: float
    samples: int
    horizon: int
    seed: int
    delta: float
    worst_case_input: np.ndarray
    skipped: int = 0


_WP_VARIANTS = ("iid", "impulse", "constant", "sinusoid")


def _draw_disturbance(rng: np.random.Generator, variant: str, horizon: int, q: int,
                      delta: float) -> np.ndarray:
    """One disturbance signal with per-step energy ||wp_k||^2 <= delta.

    Pure i.i.d. noise underestimates the worst case, so impulse, constant,
    and sampled-sinusoid energy profiles are mixed in.
    """
    r = math.sqrt(delta)
    W = np.zeros((horizon, q))

    def unit() -> np.ndarray:
        v = rng.standard_normal(q)
        n = np.linalg.norm(v)
        return v / n if n > 0 else np.eye(q)[0]

    if variant == "iid":
        for k in range(horizon):
            W[k] = r * rng.uniform() ** (1.0 / q) * unit()
    elif variant == "impulse":
        W[rng.integers(horizon)] = r * unit()
    elif variant == "constant":
        W[:] = r * unit()
    else:  # sinusoid
        v = unit()
        omega = rng.uniform(0.0, math.pi)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        for k in range(horizon):
            W[k] = r * math.sin(omega * k + phase) * v
    return W


def estimate_l2_gain(system, ctrl: RationalController, channel, delta: float,
                     samples: int = 10000, horizon: int = 200,
                     seed: int = 0) -> GainEstimate:
    """Empirical lower bound on the closed-loop L2 gain from zero initial
    state: the worst output/input energy ratio over sampled disturbances in
    the per-step ball of radius sqrt(delta).

    All trajectories roll forward together; sample idx draws its signal from
    rng((seed, idx)), so the result does not depend on batching.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    q = channel.q
    W = np.empty((samples, horizon, q))
    for idx in range(samples):
        rng = np.random.default_rng((seed, idx))
        W[idx] = _draw_disturbance(rng, _WP_VARIANTS[idx % len(_WP_VARIANTS)],
                                   horizon, q, delta)
    in_energy = np.sum(W * W, axis=(1, 2))
    live = in_energy > 0.0
    Z = np.zeros((samples, system.N))
    out_energy = np.zeros(samples)
    for k in range(horizon):
        Znext, Zp, _, alive = batch_closed_loop(system, ctrl, Z, Wp=W[:, k, :],
                                                channel=channel)
        live &= alive
        out_energy[live] += np.sum(Zp[live] * Zp[live], axis=1)
        Z = Znext
    skipped = int(np.sum(~live))
    if not np.any(live):
        return GainEstimate(gamma_lb=0.0, samples=samples, horizon=horizon, seed=seed,
                            delta=delta, worst_case_input=np.zeros((horizon, q)),
                            skipped=skipped)
    ratios = np.zeros(samples)
    ratios[live] = np.sqrt(out_energy[live] / in_energy[live])
    best = int(np.argmax(ratios))
    return GainEstimate(gamma_lb=float(ratios[best]), samples=samples, horizon=horizon,
                        seed=seed, delta=delta, worst_case_input=W[best],
                        skipped=skipped)


# ---------------------------------------------------------------------------
# region scans


@dataclass
class RegionScanPoint:
    radius_sq: float
    accepted: bool
    status: str


@dataclass
class RegionScanResult:
    radius_sq: Optional[float]
    result: Optional[SynthesisResult]
    log: List[RegionScanPoint] = field(default_factory=list)


def max_feasible_region(problem: Problem, mode: str, scan: Tuple[float, float, float],
                        multiplier_structure: str = "full",
                        gamma: Optional[float] = None,
                        settings: Optional[SolverSettings] = None,
                        refine_tol: Optional[float] = None) -> RegionScanResult:
    """Largest ball region radius^2 on the scan grid for which the design is
    accepted (stability design, or performance design when gamma is given).

    scan is (lo, hi, step). refine_tol bisects between the largest accepted
    and the smallest rejected grid point down to the given width.
    """
    lo, hi, step = (float(x) for x in scan)
    if lo <= 0 or hi < lo or step <= 0:
        raise ValueError("scan bounds must satisfy 0 < lo <= hi, step > 0")
    N = problem.system.N

    def attempt(rz: float) -> Tuple[bool, SynthesisResult]:
        anchored = problem.with_region(ball_region(N, rz))
        if gamma is None:
            res = synthesize_stability(anchored, mode, multiplier_structure, settings=settings)
        else:
            res = synthesize_performance(anchored, mode, multiplier_structure,
                                         gamma=gamma, settings=settings)
        return res.accepted, res

    log: List[RegionScanPoint] = []
    best_rz: Optional[float] = None
    best_res: Optional[SynthesisResult] = None
    first_reject: Optional[float] = None
    grid = np.arange(lo, hi + 0.5 * step, step)
    grid[-1] = min(grid[-1], hi)
    for rz in grid:
        ok, res = attempt(float(rz))
        log.append(RegionScanPoint(radius_sq=float(rz), accepted=ok, status=res.solver_status))
        if ok:
            best_rz, best_res = float(rz), res
        elif best_rz is not None and first_reject is None:
            first_reject = float(rz)
    if best_rz is None:
        return RegionScanResult(radius_sq=None, result=None, log=log)
    if refine_tol is not None and best_rz < hi:
        reject = first_reject if first_reject is not None else min(best_rz + step, hi + step)
        a, b = best_rz, reject
        while (b - a) > refine_tol:
            mid = 0.5 * (a + b)
            ok, res = attempt(mid)
            log.append(RegionScanPoint(radius_sq=mid, accepted=ok, status=res.solver_status))
            if ok:
                a, best_rz, best_res = mid, mid, res
            else:
                b = mid
    return RegionScanResult(radius_sq=best_rz, result=best_res, log=log)
