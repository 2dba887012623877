"""Command-line front end.

The CLI is a thin client of the HTTP service: by default it talks to an
in-process instance of the FastAPI app, and --server redirects the same
requests to a running deployment. Exit codes: 0 ok, 2 validation failure,
3 infeasible design, 4 runtime/singularity, 5 certificate failure.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_RUNTIME = 4
EXIT_CERTIFICATE = 5


def _load_json(path: str, what: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        click.echo(f"error: cannot read {what} {path}: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)


def _post(ctx, path: str, payload: dict):
    """POST to the remote service, or to an in-process app over ASGI."""
    import httpx

    server = ctx.obj["server"]
    if server:
        with httpx.Client(base_url=server, timeout=600.0) as client:
            return client.post(path, json=payload)

    import asyncio

    from .service import create_app

    async def go():
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(transport=transport, timeout=600.0,
                                     base_url="http://bilsyn.internal") as client:
            return await client.post(path, json=payload)

    return asyncio.run(go())


def _fail_http(resp) -> None:
    detail = resp.json().get("detail", resp.text) if resp.headers.get(
        "content-type", "").startswith("application/json") else resp.text
    click.echo(f"error: {detail}", err=True)
    if resp.status_code == 409:
        sys.exit(EXIT_INFEASIBLE)
    if resp.status_code == 422:
        sys.exit(EXIT_VALIDATION)
    sys.exit(EXIT_RUNTIME)


def _write_json(data: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(f"wrote {path}")


def _parse_range(text: str) -> list:
    parts = text.split(":")
    if len(parts) != 3:
        raise click.BadParameter("expected start:stop:step")
    start, stop, step = (float(x) for x in parts)
    if step <= 0:
        raise click.BadParameter("step must be positive")
    out = []
    x = start
    while x <= stop + 0.5 * step:
        out.append(round(min(x, stop), 12))
        x += step
    return out


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Remote service URL (default: run the service in-process).")
@click.pass_context
def main(ctx, server):
    """Design and certify controllers for discrete-time bilinear systems."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command()
@click.argument("problem_path")
@click.pass_context
def validate(ctx, problem_path):
    """Validate a problem file."""
    problem = _load_json(problem_path, "problem")
    resp = _post(ctx, "/validate", problem)
    if resp.status_code != 200:
        _fail_http(resp)
    body = resp.json()
    if not body["valid"]:
        for err in body["errors"]:
            click.echo(f"invalid: {err}", err=True)
        sys.exit(EXIT_VALIDATION)
    click.echo(f"valid: N={body['N']} m={body['m']} performance={body['has_performance']}")


@main.command()
@click.argument("problem_path")
@click.option("--mode", type=click.Choice(["linear", "gs"]), default="gs")
@click.option("--multiplier", type=click.Choice(["full", "scaled"]), default="full")
@click.option("--gamma", default=None,
              help="L2-gain bound (number), or 'bisect' to minimize it.")
@click.option("--target-P", "--target-p", "target_p", type=float, default=0.0,
              help="Trace target for --gamma bisect (0 = pure feasibility).")
@click.option("--no-verify", is_flag=True, help="Skip certificate verification.")
@click.option("--samples", type=int, default=2000)
@click.option("--seed", type=int, default=0)
@click.option("--out", default=".", help="Output directory.")
@click.pass_context
def synthesize(ctx, problem_path, mode, multiplier, gamma, target_p, no_verify,
               samples, seed, out):
    """Run synthesis; write report.json and controller.json."""
    problem = _load_json(problem_path, "problem")
    common = dict(problem=problem, mode=mode, multiplier=multiplier,
                  verify=not no_verify, samples=samples, seed=seed)
    if gamma == "bisect":
        resp = _post(ctx, "/minimize-gamma", {**common, "target_p": target_p})
        if resp.status_code != 200:
            _fail_http(resp)
        body = resp.json()
        report = body["report"]
        click.echo(f"gamma* = {body['gamma_star']:.6g}")
    else:
        payload = dict(common)
        if gamma is not None:
            try:
                payload["gamma"] = float(gamma)
            except ValueError:
                raise click.BadParameter("--gamma must be a number or 'bisect'")
        resp = _post(ctx, "/synthesize", payload)
        if resp.status_code != 200:
            _fail_http(resp)
        report = resp.json()["report"]

    outdir = Path(out)
    _write_json(report, outdir / "report.json")
    if not report["accepted"]:
        click.echo(f"design rejected: status={report['solver_status']} "
                   f"reasons={report.get('reject_reasons')}", err=True)
        sys.exit(EXIT_INFEASIBLE)
    _write_json(report["controller"], outdir / "controller.json")
    click.echo(f"accepted: tr(P) = {report['trace_P']:.6g}")
    cert = report.get("certificate")
    if cert is not None:
        click.echo(f"certificate: xi_margin={cert['xi_margin']:.3e} rho={cert['rho']:.3e} "
                   f"delta={cert['delta']}")


@main.command()
@click.argument("problem_path")
@click.option("--mode", type=click.Choice(["linear", "gs"]), default="linear")
@click.option("--multiplier", type=click.Choice(["full", "scaled"]), default="full")
@click.option("--grid", required=True, metavar="A:B:STEP",
              help="Region sizes P to sweep, e.g. 0.1:0.9:0.1.")
@click.option("--out", default=".", help="Output directory.")
@click.pass_context
def sweep(ctx, problem_path, mode, multiplier, grid, out):
    """Sweep achievable gamma over region sizes; write sweep.csv."""
    problem = _load_json(problem_path, "problem")
    grid_vals = _parse_range(grid)
    resp = _post(ctx, "/sweep", dict(problem=problem, mode=mode,
                                     multiplier=multiplier, grid=grid_vals))
    if resp.status_code != 200:
        _fail_http(resp)
    rows = resp.json()["rows"]
    outpath = Path(out) / "sweep.csv"
    outpath.parent.mkdir(parents=True, exist_ok=True)
    with open(outpath, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["P", "gamma", "status"])
        for row in rows:
            writer.writerow([repr(row["P"]),
                             "" if row["gamma"] is None else repr(row["gamma"]),
                             row["status"]])
    click.echo(f"wrote {outpath}")
    for row in rows:
        g = "-" if row["gamma"] is None else f"{row['gamma']:.6g}"
        click.echo(f"P={row['P']:g} gamma={g} {row['status']}")


@main.command("max-region")
@click.argument("problem_path")
@click.option("--mode", type=click.Choice(["linear", "gs"]), default="linear")
@click.option("--multiplier", type=click.Choice(["full", "scaled"]), default="full")
@click.option("--scan", required=True, metavar="LO:HI:STEP")
@click.option("--gamma", type=float, default=None,
              help="Require this L2-gain bound at every scanned region.")
@click.option("--refine", "refine_tol", type=float, default=None,
              help="Bisection width to refine the boundary.")
@click.option("--out", default=None, help="Write the boundary report JSON here.")
@click.pass_context
def max_region(ctx, problem_path, mode, multiplier, scan, gamma, refine_tol, out):
    """Largest ball region with an accepted design."""
    problem = _load_json(problem_path, "problem")
    lo, hi, step = scan.split(":")
    resp = _post(ctx, "/max-region", dict(
        problem=problem, mode=mode, multiplier=multiplier,
        scan={"lo": float(lo), "hi": float(hi), "step": float(step)},
        gamma=gamma, refine_tol=refine_tol))
    if resp.status_code != 200:
        _fail_http(resp)
    body = resp.json()
    if body["radius_sq"] is None:
        click.echo("no feasible region size in the scanned range", err=True)
        sys.exit(EXIT_INFEASIBLE)
    click.echo(f"max feasible Rz = {body['radius_sq']:.6g}")
    if out is not None and body.get("report") is not None:
        _write_json(body["report"], Path(out) / "report.json")
        # the report belongs to the problem re-anchored at the boundary region
        _write_json(body["problem"], Path(out) / "problem_at_boundary.json")


@main.command()
@click.argument("problem_path")
@click.argument("controller_path")
@click.option("--z0", required=True, help="Initial state, comma-separated.")
@click.option("--wp", default="zero", metavar="zero|ball:DELTA|FILE",
              help="Disturbance: none, random in a ball, or a JSON file.")
@click.option("--steps", type=int, default=200)
@click.option("--seed", type=int, default=0)
@click.option("--out", default=".", help="Output directory.")
@click.pass_context
def simulate(ctx, problem_path, controller_path, z0, wp, steps, seed, out):
    """Roll out the closed loop; write trajectory.csv."""
    problem = _load_json(problem_path, "problem")
    ctrl = _load_json(controller_path, "controller")
    ctrl.pop("region", None)
    try:
        z0_vals = [float(x) for x in z0.split(",")]
    except ValueError:
        raise click.BadParameter("--z0 must be comma-separated numbers")
    if wp == "zero":
        wp_payload = None
    elif wp.startswith("ball:"):
        wp_payload = {"kind": "ball", "delta": float(wp.split(":", 1)[1])}
    else:
        wp_payload = {"kind": "zero", "delta": 0.0, "values": _load_json(wp, "disturbance")}
    resp = _post(ctx, "/simulate", dict(problem=problem, controller=ctrl, z0=z0_vals,
                                        steps=steps, seed=seed, wp=wp_payload))
    if resp.status_code != 200:
        _fail_http(resp)
    body = resp.json()
    for w in body["warnings"]:
        click.echo(f"warning: {w}", err=True)

    outpath = Path(out) / "trajectory.csv"
    outpath.parent.mkdir(parents=True, exist_ok=True)
    Z, U, Zp, V = body["Z"], body["U"], body["Zp"], body["V"]
    N = len(Z[0])
    m = len(U[0]) if U else 0
    p = len(Zp[0]) if Zp else 0
    with open(outpath, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k"] + [f"z{i+1}" for i in range(N)] + [f"u{j+1}" for j in range(m)]
                        + [f"zp{j+1}" for j in range(p)] + (["V"] if V else []))
        for k, zrow in enumerate(Z):
            row = [k] + [repr(x) for x in zrow]
            row += [repr(x) for x in U[k]] if k < len(U) else [""] * m
            if Zp is not None:
                row += [repr(x) for x in Zp[k]] if k < len(Zp) else [""] * p
            if V:
                row.append(repr(V[k]))
            writer.writerow(row)
    click.echo(f"wrote {outpath}")
    click.echo(f"final |z| = {body['final_norm']:.3e}"
               + (f", max V = {body['max_V']:.6g}" if body["max_V"] is not None else ""))
    if body["truncated"]:
        click.echo(f"truncated: {body['error']}", err=True)
        sys.exit(EXIT_RUNTIME)


@main.command("estimate-gain")
@click.argument("problem_path")
@click.argument("controller_path")
@click.option("--delta", type=float, required=True,
              help="Per-step disturbance energy bound.")
@click.option("--samples", type=int, default=10000)
@click.option("--horizon", type=int, default=200)
@click.option("--seed", type=int, default=0)
@click.pass_context
def estimate_gain(ctx, problem_path, controller_path, delta, samples, horizon, seed):
    """Empirical lower bound on the closed-loop L2 gain."""
    problem = _load_json(problem_path, "problem")
    ctrl = _load_json(controller_path, "controller")
    ctrl.pop("region", None)
    resp = _post(ctx, "/estimate-gain", dict(problem=problem, controller=ctrl,
                                             delta=delta, samples=samples,
                                             horizon=horizon, seed=seed))
    if resp.status_code != 200:
        _fail_http(resp)
    body = resp.json()
    click.echo(f"gamma_lb = {body['gamma_lb']:.6g} "
               f"({body['samples']} samples, horizon {body['horizon']}, "
               f"{body['skipped']} skipped)")


@main.command()
@click.argument("problem_path")
@click.argument("report_path")
@click.option("--samples", type=int, default=2000)
@click.option("--seed", type=int, default=0)
@click.pass_context
def verify(ctx, problem_path, report_path, samples, seed):
    """Re-run every certificate in a report (no re-solve)."""
    problem = _load_json(problem_path, "problem")
    report = _load_json(report_path, "report")
    resp = _post(ctx, "/verify", dict(problem=problem, report=report,
                                      samples=samples, seed=seed))
    if resp.status_code != 200:
        _fail_http(resp)
    body = resp.json()
    for chk in body["checks"]:
        mark = "ok " if chk["passed"] else "FAIL"
        click.echo(f"[{mark}] {chk['name']}: {chk['detail']}")
    if not body["passed"]:
        sys.exit(EXIT_CERTIFICATE)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn
    uvicorn.run("bilsyn.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
