"""FastAPI service wrapping the synthesis toolkit.

Every endpoint is stateless: the problem travels in the request body and
results come back as JSON. Semantic problems (bad matrices, missing
channels) map to HTTP 422; an infeasible design is a normal response with
solver_status set accordingly.
"""

from __future__ import annotations

import time

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import analysis, synthesis
from ..controller import controller_from_dict
from ..model import Problem, ValidationError, problem_from_dict
from ..report import build_run_report, verify_report
from . import schemas


def _problem(data: schemas.ProblemIn) -> Problem:
    try:
        return problem_from_dict(data.model_dump(exclude_none=True))
    except ValidationError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


def create_app() -> FastAPI:
    app = FastAPI(title="bilsyn", version="0.1.0",
                  description="Controller synthesis and certification for "
                              "discrete-time bilinear systems")

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/validate", response_model=schemas.ValidateResponse)
    def validate(req: schemas.ProblemIn) -> schemas.ValidateResponse:
        try:
            prob = problem_from_dict(req.model_dump(exclude_none=True))
        except ValidationError as exc:
            return schemas.ValidateResponse(valid=False, errors=[str(exc)])
        return schemas.ValidateResponse(valid=True, N=prob.system.N, m=prob.system.m,
                                        has_performance=prob.has_performance)

    @app.post("/synthesize", response_model=schemas.ReportResponse)
    def synthesize(req: schemas.SynthesizeRequest) -> schemas.ReportResponse:
        prob = _problem(req.problem)
        t0 = time.perf_counter()
        try:
            if req.gamma is not None or req.performance or (
                    prob.has_performance and prob.performance is not None):
                res = synthesis.synthesize_performance(
                    prob, req.mode, req.multiplier, gamma=req.gamma)
            else:
                res = synthesis.synthesize_stability(prob, req.mode, req.multiplier)
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        report = build_run_report(prob, res, verify=req.verify,
                                  samples=req.samples, seed=req.seed,
                                  timing_s=time.perf_counter() - t0)
        return schemas.ReportResponse(report=report)

    @app.post("/minimize-gamma", response_model=schemas.MinimizeGammaResponse)
    def minimize_gamma(req: schemas.MinimizeGammaRequest) -> schemas.MinimizeGammaResponse:
        prob = _problem(req.problem)
        t0 = time.perf_counter()
        try:
            search = synthesis.minimize_gamma(prob, req.mode, req.multiplier,
                                              target_P=req.target_p)
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except synthesis.InfeasibleError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        report = build_run_report(prob, search.result, gamma_star=search.gamma_star,
                                  verify=req.verify, samples=req.samples, seed=req.seed,
                                  timing_s=time.perf_counter() - t0)
        return schemas.MinimizeGammaResponse(gamma_star=search.gamma_star, report=report)

    @app.post("/sweep", response_model=schemas.SweepResponse)
    def sweep(req: schemas.SweepRequest) -> schemas.SweepResponse:
        prob = _problem(req.problem)
        try:
            rows = synthesis.sweep_gamma_vs_P(prob, req.mode, req.grid, req.multiplier)
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return schemas.SweepResponse(
            rows=[schemas.SweepRowOut(P=r.P, gamma=r.gamma, status=r.status) for r in rows])

    @app.post("/max-region", response_model=schemas.MaxRegionResponse)
    def max_region(req: schemas.MaxRegionRequest) -> schemas.MaxRegionResponse:
        prob = _problem(req.problem)
        try:
            scan = analysis.max_feasible_region(
                prob, req.mode, (req.scan.lo, req.scan.hi, req.scan.step),
                multiplier_structure=req.multiplier, gamma=req.gamma,
                refine_tol=req.refine_tol)
        except (ValidationError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        report = None
        anchored_dict = None
        if scan.result is not None and scan.radius_sq is not None:
            from ..model import ball_region, problem_to_dict
            anchored = prob.with_region(ball_region(prob.system.N, scan.radius_sq))
            report = build_run_report(anchored, scan.result, verify=False)
            anchored_dict = problem_to_dict(anchored)
        return schemas.MaxRegionResponse(
            radius_sq=scan.radius_sq, report=report, problem=anchored_dict,
            log=[schemas.ScanPointOut(radius_sq=p.radius_sq, accepted=p.accepted,
                                      status=p.status) for p in scan.log])

    @app.post("/simulate", response_model=schemas.SimulateResponse)
    def simulate(req: schemas.SimulateRequest) -> schemas.SimulateResponse:
        prob = _problem(req.problem)
        try:
            ctrl = controller_from_dict(req.controller.model_dump())
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        warnings = []
        z0 = np.asarray(req.z0, dtype=float)
        if z0.size != prob.system.N:
            raise HTTPException(status_code=422,
                                detail=f"z0 must have {prob.system.N} entries")
        if ctrl.P is not None:
            from ..matrixcore import inv_spd
            if float(z0 @ inv_spd(ctrl.P) @ z0) > 1.0 + 1e-9:
                warnings.append("z0 lies outside the certified region; "
                                "guarantees do not apply")
        wp_seq = None
        if req.wp is not None:
            if isinstance(req.wp, schemas.DisturbanceIn):
                if req.wp.values is not None:
                    wp_seq = np.asarray(req.wp.values, dtype=float)
                elif req.wp.kind == "ball":
                    if prob.channel is None:
                        raise HTTPException(status_code=422,
                                            detail="disturbance requested without a channel")
                    rng = np.random.default_rng(req.seed)
                    q = prob.channel.q
                    raw = rng.standard_normal((req.steps, q))
                    norms = np.linalg.norm(raw, axis=1, keepdims=True)
                    norms[norms == 0] = 1.0
                    radii = np.sqrt(req.wp.delta) * rng.uniform(size=(req.steps, 1)) ** (1.0 / q)
                    wp_seq = raw / norms * radii
            else:
                wp_seq = np.asarray(req.wp, dtype=float)
        traj = analysis.simulate(prob.system, ctrl, z0, wp_sequence=wp_seq,
                                 steps=req.steps, channel=prob.channel)
        V = None if traj.V is None else [float(x) for x in traj.V]
        return schemas.SimulateResponse(
            Z=traj.Z.tolist(), U=traj.U.tolist(),
            Zp=None if traj.Zp is None else traj.Zp.tolist(),
            V=V, truncated=traj.truncated, error=traj.error,
            final_norm=float(np.linalg.norm(traj.Z[-1])),
            max_V=None if V is None else max(V), warnings=warnings)

    @app.post("/estimate-gain", response_model=schemas.GainEstimateResponse)
    def estimate_gain(req: schemas.GainEstimateRequest) -> schemas.GainEstimateResponse:
        prob = _problem(req.problem)
        if prob.channel is None:
            raise HTTPException(status_code=422, detail="problem has no performance channel")
        try:
            ctrl = controller_from_dict(req.controller.model_dump())
            est = analysis.estimate_l2_gain(prob.system, ctrl, prob.channel,
                                            delta=req.delta, samples=req.samples,
                                            horizon=req.horizon, seed=req.seed)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return schemas.GainEstimateResponse(gamma_lb=est.gamma_lb, samples=est.samples,
                                            horizon=est.horizon, seed=est.seed,
                                            skipped=est.skipped)

    @app.post("/verify", response_model=schemas.VerifyResponse)
    def verify(req: schemas.VerifyRequest) -> schemas.VerifyResponse:
        prob = _problem(req.problem)
        outcome = verify_report(prob, req.report, samples=req.samples, seed=req.seed)
        return schemas.VerifyResponse(
            passed=outcome["passed"],
            checks=[schemas.CheckOut(**c) for c in outcome["checks"]])

    return app


app = create_app()
