"""Controller synthesis: assemble the design LMIs as affine constraints,
solve the resulting SDPs, and return certified results.

Block layout of the stability condition (rows/cols N, m, N, m*N)::

    [ P                 -Bt(Lt (x) Szt)   A P + B0 L      Bt(Lt (x) Qzt) ]
    [ *                  Lt (x) Rzt       L               0              ]
    [ *                  *                P               0              ]
    [ *                  *                *              -Lt (x) Qzt     ]

with Lt the multiplier inverse variable. The gain-scheduling variant adds
the L_w coupling blocks, and the performance variant appends a fifth block
row/column for the disturbance-to-output channel plus a rank-q shift of the
(1,1) block. All conditions are jointly homogeneous of degree one in the
decision variables; only the region-inclusion condition pins the scale of P.

Strict inequalities are solved with an absolute buffer eps_strict and
re-checked from the returned variables; acceptance additionally guards
against the degenerate (rank-deficient P) solutions that interior-point
solvers produce on weakly infeasible instances at region boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .matrixcore import max_eig, min_eig
from .model import (PerformanceSpec, Problem, ValidationError, ball_region,
                    l2_gain_index)
from .sdp_backend import (AffineMatrix, SdpProblem, SolverSettings, solve)

MODES = ("linear", "gain_scheduled")
MULTIPLIERS = ("full", "scaled_identity")

EPS_STRICT_FACTOR = 1e-8       # strictness buffer, relative to problem scale
ACCEPT_MARGIN_FACTOR = 0.25    # accept if recomputed margin >= this * eps_strict
INVARIANCE_TOL_FACTOR = 1e-7   # numerical slack on the <= 0 condition
P_CONDITION_FLOOR = 1e-6       # lambda_min(P) >= floor * lambda_max(P)
TRACE_FLOOR_FACTOR = 1e-4      # tr(P) >= factor * region size
VAR_BOUND_FACTOR = 1e6         # norm cap on unbounded variables


class SynthesisError(RuntimeError):
    pass


class InfeasibleError(SynthesisError):
    """No admissible solution in the searched bracket/problem."""


def canonical_mode(mode: str) -> str:
    m = {"linear": "linear", "gs": "gain_scheduled", "gain_scheduled": "gain_scheduled"}.get(mode)
    if m is None:
        raise ValueError(f"unknown mode '{mode}'")
    return m


def canonical_multiplier(mult: str) -> str:
    m = {"full": "full", "scaled": "scaled_identity", "scaled_identity": "scaled_identity"}.get(mult)
    if m is None:
        raise ValueError(f"unknown multiplier structure '{mult}'")
    return m


def eps_strict(problem: Problem) -> float:
    return EPS_STRICT_FACTOR * problem.scale


@dataclass
class SynthesisVars:
    """Slots for the decision variables as affine expressions.

    Each slot may be a solver variable reference or a numeric constant; the
    LMI builders below work identically for both, so the same code assembles
    solver constraints and re-evaluates them at a returned solution.
    """

    P: AffineMatrix
    L: AffineMatrix
    Lw: AffineMatrix
    Lam: AffineMatrix
    nu: AffineMatrix
    lt: Optional[AffineMatrix] = None

    @staticmethod
    def from_values(P, L, Lw, LambdaTilde, nu, lambda_tilde=None) -> "SynthesisVars":
        c = AffineMatrix.constant
        return SynthesisVars(
            P=c(P), L=c(L), Lw=c(Lw), Lam=c(LambdaTilde),
            nu=c(np.array([[float(nu)]])),
            lt=None if lambda_tilde is None else c(np.array([[float(lambda_tilde)]])))


def build_Q(v: SynthesisVars, system, region) -> AffineMatrix:
    """Stability LMI block matrix; affine in (P, L, Lam)."""
    N, m = system.N, system.m
    Bt = system.Btilde
    LamQ = v.Lam.kron_const(region.Qzt)
    LamS = v.Lam.kron_const(region.Szt)
    LamR = v.Lam.kron_const(region.Rzt)
    c12 = -(Bt @ LamS)
    c13 = system.A @ v.P + system.B0 @ v.L
    c14 = Bt @ LamQ
    Z = AffineMatrix.zeros
    return AffineMatrix.block([
        [v.P,     c12,   c13,   c14],
        [c12.T,   LamR,  v.L,   Z(m, m * N)],
        [c13.T,   v.L.T, v.P,   Z(N, m * N)],
        [c14.T,   Z(m * N, m), Z(m * N, N), -LamQ],
    ])


def build_Q_GS(v: SynthesisVars, system, region) -> AffineMatrix:
    """Gain-scheduled stability LMI: build_Q plus the L_w coupling blocks.

    With Lw = 0 this equals build_Q entrywise.
    """
    N, m = system.N, system.m
    ImShat = np.kron(np.eye(m), region.Shat)    # mN x m
    LwS = v.Lw @ ImShat
    c12 = -(system.B0 @ LwS)
    c22 = -LwS - LwS.T
    c14 = system.B0 @ v.Lw
    Z = AffineMatrix.zeros
    corr = AffineMatrix.block([
        [Z(N, N), c12,   Z(N, N), c14],
        [c12.T,   c22,   Z(m, N), v.Lw],
        [Z(N, N), Z(N, m), Z(N, N), Z(N, m * N)],
        [c14.T,   v.Lw.T, Z(m * N, N), Z(m * N, m * N)],
    ])
    return build_Q(v, system, region) + corr


def build_invariance(v: SynthesisVars, region) -> AffineMatrix:
    """Region-inclusion condition (to be held <= 0); affine in (P, nu)."""
    one = np.array([[1.0]])
    return AffineMatrix.block([
        [v.nu.kron_const(region.Qzt) + v.P, -(v.nu.kron_const(region.Szt))],
        [-(v.nu.kron_const(region.Szt)).T, v.nu.kron_const(region.Rzt) - one],
    ])


def build_performance(v: SynthesisVars, system, region, channel,
                      perf: PerformanceSpec) -> AffineMatrix:
    """Performance LMI: gain-scheduled stability blocks bordered by the
    disturbance-to-output channel column, plus the rank-q shift of the
    (1,1) block. Affine in (P, L, Lw, Lam, lt); the index inverse blocks
    (Qpt, Spt, Rpt) are fixed data.
    """
    if v.lt is None:
        raise SynthesisError("performance build requires the scalar lt variable")
    N, m = system.N, system.m
    p, q = channel.p, channel.q
    Bp, Cp, Dpu, Dpuz, Dpw = channel.Bp, channel.Cp, channel.Dpu, channel.Dpuz, channel.Dpw
    Qpt, Spt, Rpt = perf.Qpt, perf.Spt, perf.Rpt
    ImShat = np.kron(np.eye(m), region.Shat)
    LamS = v.Lam.kron_const(region.Szt)
    LamI = v.Lam.kron_const(np.eye(N))

    c15 = v.lt.kron_const(Bp @ (Qpt @ Dpw.T - Spt))
    c25 = -(Dpuz @ LamS + Dpu @ (v.Lw @ ImShat)).T
    c35 = (Cp @ v.P + Dpu @ v.L).T
    c45 = (Dpuz @ LamI + Dpu @ v.Lw).T
    c55 = v.lt.kron_const(Rpt - Dpw @ Spt - Spt.T @ Dpw.T + Dpw @ Qpt @ Dpw.T)

    col = AffineMatrix.block([[c15], [c25], [c35], [c45]])
    big = AffineMatrix.block([
        [build_Q_GS(v, system, region), col],
        [col.T, c55],
    ])
    n5 = 2 * N + m + m * N + p
    pad = np.zeros((n5, q))
    pad[:N, :] = Bp
    return big + v.lt.kron_const(pad @ Qpt @ pad.T)


@dataclass(frozen=True)
class DecisionVars:
    P: np.ndarray
    L: np.ndarray
    Lw: np.ndarray
    LambdaTilde: np.ndarray
    nu: float
    lambda_tilde: Optional[float] = None


@dataclass
class SynthesisResult:
    mode: str
    multiplier_structure: str
    solver_status: str
    raw_status: str
    vars: Optional[DecisionVars]
    objective_value: Optional[float]
    margins: Dict[str, float]
    accepted: bool
    reject_reasons: List[str]
    gamma: Optional[float] = None
    iterations: int = 0
    solve_time: float = 0.0

    @property
    def P(self) -> np.ndarray:
        if self.vars is None:
            raise SynthesisError("no solution available")
        return self.vars.P


def _margins_from_vars(problem: Problem, mode: str, vars_: DecisionVars,
                       gamma: Optional[float]) -> Dict[str, float]:
    """Re-evaluate every LMI at the returned variables (single source: the
    same builders used to pose the SDP, fed with constants)."""
    v = SynthesisVars.from_values(vars_.P, vars_.L, vars_.Lw, vars_.LambdaTilde,
                                  vars_.nu, vars_.lambda_tilde)
    system, region = problem.system, problem.region
    margins: Dict[str, float] = {}
    stab = build_Q_GS(v, system, region) if mode == "gain_scheduled" else build_Q(v, system, region)
    margins["stability"] = min_eig(stab.const)
    margins["invariance"] = max_eig(build_invariance(v, region).const)
    margins["P"] = min_eig(vars_.P)
    margins["LambdaTilde"] = min_eig(vars_.LambdaTilde)
    margins["nu"] = vars_.nu
    if vars_.lambda_tilde is not None:
        perf = _resolve_index(problem, gamma)
        margins["performance"] = min_eig(
            build_performance(v, system, region, problem.channel, perf).const)
        margins["lambda_tilde"] = vars_.lambda_tilde
    return margins


def _acceptance(problem: Problem, status: str, margins: Dict[str, float],
                vars_: Optional[DecisionVars], performance: bool) -> Tuple[bool, List[str]]:
    reasons: List[str] = []
    if status != "optimal":
        return False, [f"solver status {status}"]
    assert vars_ is not None
    eps = eps_strict(problem)
    floor = ACCEPT_MARGIN_FACTOR * eps
    inv_tol = INVARIANCE_TOL_FACTOR * problem.scale
    if margins["stability"] < floor:
        reasons.append(f"stability LMI margin {margins['stability']:.3e} below {floor:.3e}")
    if performance and margins.get("performance", -1.0) < floor:
        reasons.append(f"performance LMI margin {margins.get('performance'):.3e} below {floor:.3e}")
    if margins["invariance"] > inv_tol:
        reasons.append(f"invariance condition violated by {margins['invariance']:.3e}")
    if margins["P"] < floor:
        reasons.append(f"P not positive definite (margin {margins['P']:.3e})")
    if margins["LambdaTilde"] < floor:
        reasons.append(f"multiplier not positive definite (margin {margins['LambdaTilde']:.3e})")
    if margins["nu"] < floor:
        reasons.append(f"nu too small ({margins['nu']:.3e})")
    if performance and margins.get("lambda_tilde", 0.0) < floor:
        reasons.append("lambda_tilde too small")
    # degeneracy guards: weakly infeasible boundary instances surface as
    # rank-deficient or collapsed P with formally tolerable residuals
    eigs = np.linalg.eigvalsh(vars_.P)
    if eigs[0] < P_CONDITION_FLOOR * eigs[-1]:
        reasons.append(f"P is numerically rank-deficient (eig range {eigs[0]:.3e}..{eigs[-1]:.3e})")
    if float(np.trace(vars_.P)) < TRACE_FLOOR_FACTOR * problem.region.radius_sq:
        reasons.append(f"tr(P) collapsed ({np.trace(vars_.P):.3e})")
    return (not reasons), reasons


def _resolve_index(problem: Problem, gamma: Optional[float]) -> PerformanceSpec:
    if gamma is not None:
        if gamma <= 0:
            raise ValidationError("gamma must be positive")
        return l2_gain_index(float(gamma), problem.channel.q, problem.channel.p)
    if problem.performance is None:
        raise ValidationError("problem has no performance index and no gamma was given")
    return problem.performance


def _solve_design(problem: Problem, mode: str, multiplier_structure: str,
                  gamma: Optional[float], performance: bool,
                  settings: Optional[SolverSettings]) -> SynthesisResult:
    mode = canonical_mode(mode)
    mult = canonical_multiplier(multiplier_structure)
    system, region = problem.system, problem.region
    N, m = system.N, system.m
    eps = eps_strict(problem)
    bound = VAR_BOUND_FACTOR * problem.scale

    sp = SdpProblem()
    P = sp.sym_var("P", N)
    L = sp.rect_var("L", m, N)
    Lw = sp.rect_var("Lw", m, N * m) if mode == "gain_scheduled" else AffineMatrix.zeros(m, N * m)
    if mult == "full":
        Lam = sp.sym_var("LambdaTilde", m)
    else:
        Lam = sp.scalar_var("mu").kron_const(np.eye(m))
    nu = sp.scalar_var("nu")
    lt = sp.scalar_var("lambda_tilde") if performance else None
    v = SynthesisVars(P=P, L=L, Lw=Lw, Lam=Lam, nu=nu, lt=lt)

    eyeN = np.eye(N)
    if performance:
        perf = _resolve_index(problem, gamma)
        main = build_performance(v, system, region, problem.channel, perf)
    else:
        main = build_Q_GS(v, system, region) if mode == "gain_scheduled" else build_Q(v, system, region)
    sp.constrain_psd(main - eps * np.eye(main.shape[0]))
    sp.constrain_nsd(build_invariance(v, region))
    sp.constrain_psd(P - eps * eyeN)
    sp.constrain_psd(Lam - eps * np.eye(m))
    sp.constrain_nonneg(nu - eps)
    sp.constrain_nonneg(AffineMatrix.constant(np.array([[bound]])) - nu)
    # homogeneity leaves (L, Lw, Lam) free to blow up on boundary instances;
    # cap them so weak infeasibility is detected instead of exploited
    sp.constrain_norm_le(L, bound)
    if mode == "gain_scheduled":
        sp.constrain_norm_le(Lw, bound)
    sp.constrain_norm_le(Lam, math.sqrt(m) * bound)
    if performance:
        sp.constrain_nonneg(lt - eps)
        sp.constrain_nonneg(AffineMatrix.constant(np.array([[bound]])) - lt)
    sp.maximize(P.trace())

    sol = solve(sp, settings)
    if sol.status != "optimal":
        return SynthesisResult(
            mode=mode, multiplier_structure=mult, solver_status=sol.status,
            raw_status=sol.raw_status, vars=None, objective_value=None, margins={},
            accepted=False, reject_reasons=[f"solver status {sol.status}"],
            gamma=gamma, iterations=sol.iterations, solve_time=sol.solve_time)

    Lam_val = sol.values["LambdaTilde"] if mult == "full" else float(sol.values["mu"]) * np.eye(m)
    vars_ = DecisionVars(
        P=0.5 * (sol.values["P"] + sol.values["P"].T),
        L=sol.values["L"],
        Lw=sol.values["Lw"] if mode == "gain_scheduled" else np.zeros((m, N * m)),
        LambdaTilde=0.5 * (Lam_val + Lam_val.T),
        nu=float(sol.values["nu"]),
        lambda_tilde=float(sol.values["lambda_tilde"]) if performance else None)
    margins = _margins_from_vars(problem, mode, vars_, gamma)
    accepted, reasons = _acceptance(problem, sol.status, margins, vars_, performance)
    return SynthesisResult(
        mode=mode, multiplier_structure=mult, solver_status=sol.status,
        raw_status=sol.raw_status, vars=vars_, objective_value=sol.objective,
        margins=margins, accepted=accepted, reject_reasons=reasons, gamma=gamma,
        iterations=sol.iterations, solve_time=sol.solve_time)


def synthesize_stability(problem: Problem, mode: str = "gain_scheduled",
                         multiplier_structure: str = "full",
                         settings: Optional[SolverSettings] = None) -> SynthesisResult:
    """Maximize tr(P) subject to the stability and region-inclusion LMIs."""
    return _solve_design(problem, mode, multiplier_structure, gamma=None,
                         performance=False, settings=settings)


def synthesize_performance(problem: Problem, mode: str = "gain_scheduled",
                           multiplier_structure: str = "full",
                           gamma: Optional[float] = None,
                           settings: Optional[SolverSettings] = None) -> SynthesisResult:
    """Maximize tr(P) subject to the performance and region-inclusion LMIs.

    gamma parameterizes the L2-gain index; pass None to use the problem's
    own fixed performance index.
    """
    if problem.channel is None:
        raise ValidationError("problem has no performance channel")
    return _solve_design(problem, mode, multiplier_structure, gamma=gamma,
                         performance=True, settings=settings)


def recheck_margins(problem: Problem, result: SynthesisResult) -> Dict[str, float]:
    """Margins recomputed from scratch at the result's variables."""
    if result.vars is None:
        raise SynthesisError("result carries no variables")
    return _margins_from_vars(problem, result.mode, result.vars, result.gamma)


# ---------------------------------------------------------------------------
# gamma search and sweeps


@dataclass
class GammaSearch:
    gamma_star: float
    result: SynthesisResult
    probes: List[Tuple[float, bool]] = field(default_factory=list)


def minimize_gamma(problem: Problem, mode: str = "gain_scheduled",
                   multiplier_structure: str = "full", target_P: float = 0.0,
                   settings: Optional[SolverSettings] = None,
                   rel_tol: float = 1e-3, gamma_lo: float = 1e-3,
                   gamma_max: float = 1e6) -> GammaSearch:
    """Bisect the smallest gamma whose performance design is accepted with
    tr(P) >= target_P - 1e-6.

    The bracket starts at [gamma_lo, 1] and doubles the upper end until
    feasible (or gamma_max is hit).
    """
    if problem.channel is None:
        raise ValidationError("problem has no performance channel")
    probes: List[Tuple[float, bool]] = []
    best: Dict[float, SynthesisResult] = {}

    def feasible(g: float) -> bool:
        res = synthesize_performance(problem, mode, multiplier_structure, gamma=g,
                                     settings=settings)
        ok = res.accepted and float(np.trace(res.vars.P)) >= target_P - 1e-6
        probes.append((g, ok))
        if ok:
            best[g] = res
        return ok

    lo, hi = gamma_lo, 1.0
    while not feasible(hi):
        lo = hi
        hi *= 2.0
        if hi > gamma_max:
            raise InfeasibleError(
                f"no feasible gamma in [{gamma_lo:g}, {gamma_max:g}] "
                f"(mode={mode}, multiplier={multiplier_structure}, target_P={target_P:g}; "
                f"probes={[(round(g, 6), ok) for g, ok in probes]})")
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return GammaSearch(gamma_star=hi, result=best[hi], probes=probes)


@dataclass
class SweepRow:
    P: float
    gamma: Optional[float]
    status: str


def sweep_gamma_vs_P(problem: Problem, mode: str, P_grid: Sequence[float],
                     multiplier_structure: str = "full",
                     settings: Optional[SolverSettings] = None) -> List[SweepRow]:
    """Achievable gamma for each target region size P.

    Each grid point re-anchors the modeling region to the ball of radius^2 P
    (the design goal is Z_RoA = Z there) and bisects gamma with target trace
    N*P. Homogeneity of the performance LMI makes the fixed-region reading
    collapse to a single threshold, so the per-point region is what gives
    the gamma-vs-P trade-off its meaning.
    """
    if problem.channel is None:
        raise ValidationError("problem has no performance channel")
    N = problem.system.N
    rows: List[SweepRow] = []
    for Pval in P_grid:
        Pval = float(Pval)
        if Pval <= 0:
            rows.append(SweepRow(P=Pval, gamma=None, status="invalid"))
            continue
        anchored = problem.with_region(ball_region(N, Pval))
        try:
            search = minimize_gamma(anchored, mode, multiplier_structure,
                                    target_P=N * Pval, settings=settings)
            rows.append(SweepRow(P=Pval, gamma=search.gamma_star, status="ok"))
        except InfeasibleError:
            rows.append(SweepRow(P=Pval, gamma=None, status="infeasible"))
    return rows
