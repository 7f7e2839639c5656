"""Configuration-driven entry point.

Reads a JSON run config, executes the requested mode and writes artifacts:
``report.json`` (deterministic summary), ``solution.csv`` (node coordinates
plus the solved field), ``certificate.json`` in certify mode and
``run_meta.json`` (wall-clock metadata, excluded from determinism checks).
Exit status: 0 on success, 1 for validation/config failures, 2 when a solve
ends flagged non-converged.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import (ConfigError, RunConfig, build_alpha_schedule, build_domain,
                     build_problem, parse_config)
from .discounted import check_barrier
from .ergodic import (check_bar_w_bound, check_lambda_bound, expand_domain,
                      vanishing_discount)
from .grid import build_grid
from .lyapunov import evaluate_lyapunov_drift, fit_envelope
from .problem import validate_problem
from .quadrature import build_quadrature

__all__ = ["main", "run", "convergence_study"]


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _write_solution_csv(path: Path, grid, values: np.ndarray) -> None:
    cols = [grid.nodes[:, c] for c in range(grid.d)] + [np.asarray(values)]
    header = ",".join([f"x{c + 1}" for c in range(grid.d)] + ["u"])
    data = np.column_stack(cols)
    with path.open("w") as fh:
        fh.write(header + "\n")
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _validation_summary(prob, grid, q) -> list[dict]:
    if q is None:
        return []
    return validate_problem(prob, grid, q).summary()


def _run_ergodic(cfg: RunConfig, outdir: Path) -> int:
    prob = build_problem(cfg)
    domain = build_domain(cfg)
    schedule = build_alpha_schedule(cfg)
    sol = vanishing_discount(prob, domain, schedule, cfg.alpha.tol,
                             solver_tol=cfg.solver.tol,
                             max_iter=cfg.solver.max_policy_iters)
    grid = sol.grid
    invariants = {
        "origin_normalized": bool(sol.u[grid.origin_index] == 0.0),
        "growth_nonincreasing_tail": bool(sol.growth_report["nonincreasing_tail"]),
        "lambda_trace_cauchy": bool(sol.converged),
    }
    if prob.lyapunov is not None and len(sol.alpha_trace) >= 2:
        s = prob.kernel.s if prob.kernel is not None else 0.75
        q = build_quadrature(grid, s, grid.R + domain.r_far_margin, domain.reg_radius)
        cert = fit_envelope(evaluate_lyapunov_drift(prob, grid, q), prob.lyapunov, grid)
        if cert.ok:
            lb = check_lambda_bound(sol.alpha_trace, prob, grid, cert.k0)
            invariants["lambda_alpha_bounded"] = bool(lb.ok)
        bw = check_bar_w_bound(sol.alpha_trace, prob, grid, domain.window_radius)
        invariants["wbar_growth_bound"] = bool(bw.ok)
    report = {
        "mode": "ergodic",
        "lambda_star": float(sol.lambda_star),
        "converged": bool(sol.converged),
        "alpha_trace": [
            {"alpha": lv.alpha, "lambda": lv.lam,
             "lam_change": None if np.isinf(lv.lam_change) else lv.lam_change,
             "wbar_change": None if np.isinf(lv.wbar_change) else lv.wbar_change,
             "alpha_norm": lv.alpha_norm, "residual": lv.residual}
            for lv in sol.alpha_trace
        ],
        "radius_trace": [
            {"R": R, "inner_change": None if np.isinf(c) else c}
            for R, c in sol.alpha_trace[-1].radius_trace
        ],
        "growth_report": sol.growth_report,
        "invariants": invariants,
    }
    _write_json(outdir / "report.json", report)
    _write_solution_csv(outdir / "solution.csv", grid, sol.u)
    return 0 if sol.converged else 2


def _run_discounted(cfg: RunConfig, outdir: Path) -> int:
    prob = build_problem(cfg)
    g = cfg.grid
    alpha = cfg.alpha.start if prob.zeroth is None else None
    sol = expand_domain(prob, alpha, tuple(g.radii), cfg.solver.tol,
                        d=g.d, hx=g.hx, r_far_margin=g.r_far_margin,
                        max_iter=cfg.solver.max_policy_iters)
    grid = sol.diagnostics["grid"]
    report = {
        "mode": "discounted",
        "alpha": alpha,
        "residual_inf_norm": sol.residual_inf_norm,
        "iterations": sol.iterations,
        "converged": bool(sol.converged),
        "radius_trace": [
            {"R": R, "inner_change": None if np.isinf(c) else c}
            for R, c in sol.diagnostics["radius_trace"]
        ],
        "radius_stabilized": bool(sol.diagnostics["radius_stabilized"]),
        "sup_norm": float(np.max(np.abs(sol.w))),
    }
    if prob.lyapunov is not None:
        s = prob.kernel.s if prob.kernel is not None else 0.75
        q = build_quadrature(grid, s, grid.R + g.r_far_margin, g.reg_radius)
        cert = fit_envelope(evaluate_lyapunov_drift(prob, grid, q), prob.lyapunov, grid)
        if cert.ok:
            br = check_barrier(sol, prob, grid, k0=cert.k0)
            report["barrier"] = {"ok": br.ok, "n_violations": br.n_violations,
                                 "min_margin": br.min_margin, "detail": br.detail}
    _write_json(outdir / "report.json", report)
    _write_solution_csv(outdir / "solution.csv", grid, sol.w)
    with (outdir / "trace.csv").open("w") as fh:
        fh.write("iteration,residual,policy_changes\n")
        for it, res, changes in sol.trace:
            fh.write(f"{it},{repr(float(res))},{changes}\n")
    return 0 if sol.converged else 2


def _run_certify(cfg: RunConfig, outdir: Path) -> int:
    prob = build_problem(cfg)
    if prob.lyapunov is None:
        raise ConfigError("certify mode needs a problem family with Lyapunov data")
    g = cfg.grid
    grid = build_grid(g.d, g.hx, g.radii[-1])
    s = prob.kernel.s if prob.kernel is not None else 0.75
    q = build_quadrature(grid, s, grid.R + g.r_far_margin, g.reg_radius)
    values = evaluate_lyapunov_drift(prob, grid, q)
    cert = fit_envelope(values, prob.lyapunov, grid)
    payload = cert.to_dict()
    payload["validation"] = _validation_summary(prob, grid, q)
    _write_json(outdir / "certificate.json", payload)
    _write_json(outdir / "report.json", {
        "mode": "certify", "ok": bool(cert.ok), "k0": cert.k0, "k1": cert.k1,
        "n_violations": len(cert.violations),
        "worst_margin": cert.worst_margin,
    })
    _write_solution_csv(outdir / "solution.csv", grid, values)
    return 0 if cert.ok else 2


def convergence_study(cfg: RunConfig, outdir: Path) -> int:
    """Ergodic solve at hx, hx/2, hx/4 with pairwise inner-window differences.

    No extrapolation and no rate claims; deltas are recorded as observed.
    """
    import dataclasses

    prob = build_problem(cfg)
    schedule = build_alpha_schedule(cfg)
    sols = []
    for k in range(3):
        g = dataclasses.replace(cfg.grid, hx=cfg.grid.hx / 2**k)
        domain = build_domain(dataclasses.replace(cfg, grid=g))
        sols.append(vanishing_discount(prob, domain, schedule, cfg.alpha.tol,
                                       solver_tol=cfg.solver.tol,
                                       max_iter=cfg.solver.max_policy_iters))
    lam = [float(s.lambda_star) for s in sols]
    coarse = sols[0].grid
    win = np.flatnonzero(coarse.radii() <= build_domain(cfg).window_radius * (1 + 1e-12))
    diffs = []
    for a, b in ((0, 1), (1, 2)):
        ga, gb = sols[a].grid, sols[b].grid
        pts = coarse.nodes[win]
        ia = ga.node_index_of_lattice(np.rint(pts / ga.hx).astype(np.int64))
        ib = gb.node_index_of_lattice(np.rint(pts / gb.hx).astype(np.int64))
        diffs.append(float(np.max(np.abs(sols[a].u[ia] - sols[b].u[ib]))))
    report = {
        "mode": "convergence-study",
        "hx": [cfg.grid.hx / 2**k for k in range(3)],
        "lambda_star": lam,
        "lambda_deltas": [abs(lam[0] - lam[1]), abs(lam[1] - lam[2])],
        "window_sup_diffs": diffs,
        "converged": [bool(s.converged) for s in sols],
    }
    _write_json(outdir / "report.json", report)
    return 0 if all(s.converged for s in sols) else 2


def run(cfg: RunConfig, output_dir: str | None = None, workers: int = 0) -> int:
    """Execute one run config; returns the process exit status.

    ``workers`` is recorded in the run metadata; the solvers are effectively
    single-threaded apart from BLAS-level parallelism.
    """
    outdir = Path(output_dir if output_dir is not None else cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    if cfg.mode == "ergodic":
        code = _run_ergodic(cfg, outdir)
    elif cfg.mode == "discounted":
        code = _run_discounted(cfg, outdir)
    elif cfg.mode == "certify":
        code = _run_certify(cfg, outdir)
    elif cfg.mode == "convergence-study":
        code = convergence_study(cfg, outdir)
    else:  # pragma: no cover - parse_config already rejects this
        raise ConfigError(f"unknown mode {cfg.mode!r}")
    _write_json(outdir / "run_meta.json", {
        "wall_seconds": time.time() - t0,
        "nlhjb_version": __version__,
        "workers": workers,
    })
    return code


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(
        prog="nlhjb",
        description="Solvers for ergodic and discounted HJB equations with "
                    "stable-like jump operators")
    ap.add_argument("config", help="path to the JSON run config")
    ap.add_argument("--output-dir", default=None, help="override config output_dir")
    ap.add_argument("--workers", type=int, default=0,
                    help="cap on worker threads (recorded; BLAS-level only)")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)

    try:
        raw = json.loads(Path(args.config).read_text())
        cfg = parse_config(raw)
        code = run(cfg, output_dir=args.output_dir, workers=args.workers)
    except (ConfigError, ValueError, OSError, json.JSONDecodeError) as exc:
        block = {"error": {"kind": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(block, sort_keys=True))
        return 1
    if args.verbose:
        outdir = Path(args.output_dir if args.output_dir else cfg.output_dir)
        print((outdir / "report.json").read_text())
    return code


if __name__ == "__main__":
    sys.exit(main())
