"""Run reports: the JSON artifact a synthesis run produces and the
re-verification of such an artifact without re-solving.

A report contains everything needed to re-check the design: the decision
variables, the extracted controller, and the certificate summary. Timing is
informational and excluded from any byte-stability guarantees.
"""

from __future__ import annotations

import hashlib
import json
from typing import Optional

import numpy as np

from . import analysis
from .controller import controller_to_dict, extract
from .model import Problem, problem_to_dict
from .synthesis import (DecisionVars, SynthesisResult, recheck_margins)

MARGIN_MATCH_TOL = 1e-6
DEFAULT_VERIFY_SAMPLES = 2000


def problem_digest(problem: Problem) -> str:
    canonical = json.dumps(problem_to_dict(problem), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _certificate_summary(problem: Problem, result: SynthesisResult,
                         samples: int, seed: int) -> dict:
    cert = analysis.verify_certificate(result, problem)
    roa = analysis.verify_roa_inclusion(result, problem.region, samples=min(samples, 1000),
                                        seed=seed)
    ctrl = extract(result, problem.region)
    lyap = analysis.verify_lyapunov_decrease(result, problem.system, ctrl,
                                             samples=samples, seed=seed)
    return {
        "xi_margin": cert.xi_margin,
        "rho": cert.rho,
        "eps": cert.eps,
        "delta": cert.delta,
        "roa_included": roa.included,
        "roa_matrix_margin": roa.matrix_margin,
        "lyapunov_samples": lyap.samples,
        "lyapunov_violations": lyap.violations,
        "lyapunov_worst_margin": lyap.worst_margin,
    }


def build_run_report(problem: Problem, result: SynthesisResult,
                     gamma_star: Optional[float] = None, verify: bool = True,
                     samples: int = DEFAULT_VERIFY_SAMPLES, seed: int = 0,
                     timing_s: Optional[float] = None) -> dict:
    report: dict = {
        "problem_digest": problem_digest(problem),
        "mode": result.mode,
        "multiplier_structure": result.multiplier_structure,
        "solver_status": result.solver_status,
        "accepted": result.accepted,
        "reject_reasons": result.reject_reasons,
        "gamma": result.gamma,
        "gamma_star": gamma_star,
        "margins": result.margins,
        "objective_value": result.objective_value,
    }
    if result.vars is not None:
        v = result.vars
        report["P"] = v.P.tolist()
        report["trace_P"] = float(np.trace(v.P))
        report["vars"] = {
            "P": v.P.tolist(), "L": v.L.tolist(), "Lw": v.Lw.tolist(),
            "LambdaTilde": v.LambdaTilde.tolist(), "nu": v.nu,
            "lambda_tilde": v.lambda_tilde,
        }
        if result.accepted:
            ctrl = extract(result, problem.region)
            report["controller"] = controller_to_dict(ctrl, problem.region)
            if verify:
                report["certificate"] = _certificate_summary(problem, result, samples, seed)
    if timing_s is not None:
        report["timing_s"] = timing_s
    return report


def result_from_report(problem: Problem, report: dict) -> SynthesisResult:
    """Reconstruct a result object from a report's stored variables;
    margins and acceptance are recomputed, not trusted."""
    v = report["vars"]
    vars_ = DecisionVars(
        P=np.asarray(v["P"], dtype=float),
        L=np.asarray(v["L"], dtype=float),
        Lw=np.asarray(v["Lw"], dtype=float),
        LambdaTilde=np.asarray(v["LambdaTilde"], dtype=float),
        nu=float(v["nu"]),
        lambda_tilde=None if v.get("lambda_tilde") is None else float(v["lambda_tilde"]))
    shell = SynthesisResult(
        mode=report["mode"], multiplier_structure=report["multiplier_structure"],
        solver_status=report["solver_status"], raw_status="", vars=vars_,
        objective_value=report.get("objective_value"), margins={}, accepted=False,
        reject_reasons=[], gamma=report.get("gamma"))
    from .synthesis import _acceptance  # module-internal policy, single source
    shell.margins = recheck_margins(problem, shell)
    shell.accepted, shell.reject_reasons = _acceptance(
        problem, shell.solver_status, shell.margins, vars_,
        performance=vars_.lambda_tilde is not None)
    return shell


def verify_report(problem: Problem, report: dict, samples: int = DEFAULT_VERIFY_SAMPLES,
                  seed: int = 0) -> dict:
    """Re-run every certificate a report claims; no SDP is solved.

    Returns {"passed": bool, "checks": [{"name", "passed", "detail"}, ...]}.
    Performance-specific checks are skipped (recorded as such) for
    stability-only reports.
    """
    checks = []

    def check(name: str, passed: bool, detail: str) -> None:
        checks.append({"name": name, "passed": bool(passed), "detail": detail})

    digest = problem_digest(problem)
    check("problem_digest", digest == report.get("problem_digest"),
          "problem matches the one the report was produced from")

    if "vars" not in report:
        check("solution_present", False, "report carries no decision variables")
        return {"passed": False, "checks": checks}

    result = result_from_report(problem, report)
    check("margins_accepted", result.accepted,
          "; ".join(result.reject_reasons) or "all LMI margins valid at stored variables")

    stored = report.get("margins", {})
    if stored:
        scale = max(1.0, problem.scale)
        drift = max(abs(result.margins.get(k, float("nan")) - float(sv))
                    for k, sv in stored.items())
        check("margins_match", drift <= MARGIN_MATCH_TOL * scale,
              f"max drift vs stored margins: {drift:.3e}")

    try:
        cert = analysis.verify_certificate(result, problem)
        check("xi_negative_definite", cert.xi_margin < 0,
              f"max eig(Xi) = {cert.xi_margin:.3e}")
        check("rho_positive", cert.rho > 0, f"rho = {cert.rho:.3e}")
        if result.vars.lambda_tilde is not None:
            if cert.delta is not None:
                check("delta_positive", cert.delta > 0, f"delta = {cert.delta:.3e}")
            else:
                check("delta_positive", True, "skipped: no gain parameterization")
        else:
            check("delta_positive", True, "skipped: stability-only report")
    except analysis.CertificateError as exc:
        check("xi_negative_definite", False, str(exc))

    roa = analysis.verify_roa_inclusion(result, problem.region,
                                        samples=min(samples, 1000), seed=seed)
    check("roa_inclusion", roa.included,
          f"matrix margin {roa.matrix_margin:.3e}, {roa.sample_violations} sample violations")

    try:
        ctrl = extract(result, problem.region)
        lyap = analysis.verify_lyapunov_decrease(result, problem.system, ctrl,
                                                 samples=samples, seed=seed)
        check("lyapunov_decrease", lyap.violations == 0,
              f"{lyap.violations}/{lyap.samples} violations, worst {lyap.worst_margin:.3e}")
    except Exception as exc:  # extraction failure on a tampered report
        check("lyapunov_decrease", False, str(exc))

    return {"passed": all(c["passed"] for c in checks), "checks": checks}
