"""Command-line front end.

Exit codes: 0 certified / pass, 2 infeasible at order / FAIL,
3 solver failure, 64 schema or usage error.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import config
from . import hierarchy as H
from .io import (SchemaError, certificate_from_json, certificate_to_json, conic_from_json, dump_json,
                 load_json, moments_from_json, problem_from_json)
from .momentside import bmp_check
from .sdp import DeskCapExceeded, export_sdpa, import_solution
from .verify import prop_main_check, verify_certificate

EXIT_OK, EXIT_INFEASIBLE, EXIT_SOLVER, EXIT_SCHEMA = 0, 2, 3, 64
SDPA_ENV = "PMICERT_SDPA_BIN"

HIERARCHIES = ("membership", "sparse", "homogeneous", "inhomogeneous", "polya", "perturbation")


def _status_exit(status: str) -> int:
    if status in (H.CERTIFIED, H.BOUND_FOUND):
        return EXIT_OK
    if status == H.INFEASIBLE:
        return EXIT_INFEASIBLE
    return EXIT_SOLVER


def _order(args, order: dict, key: str, default=None):
    v = getattr(args, key, None)
    if v is not None:
        return v
    return order.get(key, default)


def _result_report(res: H.HierarchyResult) -> dict:
    rep = {"status": res.status, "value": res.value, "residual": res.residual, "meta": res.meta}
    if res.report is not None:
        rep["solver"] = {"status": res.report.status, "residuals": res.report.residuals,
                         "ray_residuals": res.report.ray_residuals, "message": res.report.message}
    return rep


def run_certify(prob: H.PMIProblem, order: dict, args) -> H.HierarchyResult:
    hier = args.hierarchy
    d = _order(args, order, "d", 1)
    k = _order(args, order, "k")
    N = _order(args, order, "N", 0)
    eps = _order(args, order, "eps")
    if hier == "membership":
        return H.certify_membership(prob, d, k)
    if hier == "sparse":
        if prob.cliques is None:
            raise SchemaError("$.cliques", "the sparse hierarchy needs a clique decomposition")
        return H.certify_sparse(prob, prob.cliques, d, k)
    if hier == "homogeneous":
        if args.auto_N:
            return H.search_N(lambda n_: H.certify_homogeneous(prob, n_, k), args.n_cap)
        return H.certify_homogeneous(prob, N, k)
    if hier == "inhomogeneous":
        if eps is None:
            raise SchemaError("$.order.eps", "the inhomogeneous hierarchy needs eps > 0")
        return H.certify_inhomogeneous(prob, eps, None if args.auto_N else N, k, args.n_cap)
    if hier == "polya":
        if args.auto_N:
            return H.search_N(lambda n_: H.certify_polya(prob, n_, k), args.n_cap)
        return H.certify_polya(prob, N, k)
    if hier == "perturbation":
        return H.solve_perturbation(prob, d, k)
    raise SchemaError("--hierarchy", f"unknown hierarchy {hier!r}")


def cmd_certify(args) -> int:
    prob, order = problem_from_json(load_json(args.problem))
    if prob.F is None:
        raise SchemaError("$.F", "certify needs a target F")
    res = run_certify(prob, order, args)
    report = _result_report(res)
    if res.certificate is not None and args.out:
        dump_json(certificate_to_json(res.certificate), args.out)
    if args.report:
        dump_json(report, args.report)
    print(dump_json({k: report[k] for k in ("status", "value", "residual")}, None), end="")
    return _status_exit(res.status)


def _optimize_one(job):
    problem_path, k, eps = job
    prob, _ = problem_from_json(load_json(problem_path))
    c = prob.objective_c
    P = prob.objective_P
    if eps is None:
        res = H.build_robust_opt(c, P, prob, k)
    else:
        res = H.build_robust_opt_noncompact(c, P, prob, eps, k)
    return k, res.status, res.value, res.residual


def _parse_schedule(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in text.split(",")]


def cmd_optimize(args) -> int:
    prob, order = problem_from_json(load_json(args.problem))
    if prob.objective_P is None:
        raise SchemaError("$.objective", "optimize needs an objective block")
    eps = args.eps if args.eps is not None else order.get("eps")
    if args.schedule:
        ks = _parse_schedule(args.schedule)
    else:
        ks = [args.k if args.k is not None else order.get("k", 1)]
    jobs = [(str(args.problem), k, eps) for k in ks]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_optimize_one, jobs))
    else:
        rows = [_optimize_one(j) for j in jobs]
    rows.sort(key=lambda r: r[0])
    tol = config.DEFAULTS.monotone
    prev = None
    print(f"{'k':>3}  {'status':<22} {'value':>22}  note")
    any_found = False
    for k, status, value, _ in rows:
        note = ""
        if status == H.BOUND_FOUND:
            any_found = True
            if eps is None and prev is not None and value > prev + tol:
                note = f"monotonicity violated by {value - prev:.3e}"
            prev = value if value is not None else prev
        vtxt = f"{value:.12g}" if value is not None else "-"
        print(f"{k:>3}  {status:<22} {vtxt:>22}  {note}")
    return EXIT_OK if any_found else EXIT_INFEASIBLE


def cmd_moments_check(args) -> int:
    S = moments_from_json(load_json(args.moments))
    G, nu = None, None
    if args.problem:
        prob, _ = problem_from_json(load_json(args.problem))
        if len(prob.G) > 1:
            raise SchemaError("$.G", "moments check takes at most one constraint")
        G = prob.G[0] if prob.G else None
        nu = prob.nu
    rep = bmp_check(S, args.C, args.d, args.k, G, nu)
    print(dump_json(rep.to_dict(), args.out), end="")
    return EXIT_OK if rep.verdict == "necessary-conditions-pass" else EXIT_INFEASIBLE


def _build_conic(args):
    obj = load_json(args.problem)
    if isinstance(obj, dict) and "conic" in obj:
        return conic_from_json(obj["conic"], "$.conic")
    prob, order = problem_from_json(obj)
    d = _order(args, order, "d", 1)
    k = _order(args, order, "k")
    N = _order(args, order, "N", 0)
    hier = args.hierarchy
    if hier == "membership":
        asm = H.build_membership(prob, d, k)
    elif hier == "sparse":
        asm = H.build_sparse(prob, prob.cliques, d, k)
    elif hier == "homogeneous":
        asm = H.build_homogeneous(prob, N, k)
    elif hier == "inhomogeneous":
        asm = H.build_inhomogeneous(prob, _order(args, order, "eps"), N, k)
    elif hier == "polya":
        asm = H.build_polya(prob, N, k)
    else:
        asm, _ = H.build_perturbation(prob, d, k)
        return asm.prob
    return asm.finish()


def cmd_export(args) -> int:
    cp = _build_conic(args)
    text = export_sdpa(cp, args.out)
    if args.out is None:
        sys.stdout.write(text)
    binary = os.environ.get(SDPA_ENV)
    if args.solve_external:
        if not binary:
            print(f"{SDPA_ENV} is not set", file=sys.stderr)
            return EXIT_SOLVER
        with tempfile.TemporaryDirectory() as tmp:
            dat = Path(tmp) / "problem.dat-s"
            res = Path(tmp) / "problem.result"
            dat.write_text(text)
            subprocess.run([binary, str(dat), str(res)], check=True, capture_output=True)
            rep = import_solution(cp, res)
        print(dump_json({"primal_obj": rep.primal_obj, "dual_obj": rep.dual_obj,
                         "residuals": rep.residuals}, None), end="")
    return EXIT_OK


def cmd_verify(args) -> int:
    prob, _ = problem_from_json(load_json(args.problem))
    cert = certificate_from_json(load_json(args.certificate))
    target = H.certificate_target(prob, cert.meta)
    tol = args.tol if args.tol is not None else config.DEFAULTS.verification
    rep = verify_certificate(target, cert, prob.G, prob.nu, tol=tol, extras=prob.extras)
    print(dump_json(rep.to_dict(), args.out), end="")
    return EXIT_OK if rep.passed else EXIT_INFEASIBLE


def cmd_propmain(args) -> int:
    prob, _ = problem_from_json(load_json(args.problem))
    ks = range(args.kmin, args.kmax + 1)
    rep = prop_main_check(prob.F, prob.G, prob.nu, args.C, args.M, ks, args.density)
    print(dump_json(rep.to_dict(), args.out), end="")
    return EXIT_OK if rep.k_bar is not None else EXIT_INFEASIBLE


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pmicert", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON file overriding numerical tolerances")
    ap.add_argument("--seed", type=int, default=0, help="seed (solves are deterministic)")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("certify", help="build, solve and verify a certificate")
    c.add_argument("problem")
    c.add_argument("--hierarchy", choices=HIERARCHIES, default="membership")
    c.add_argument("--d", type=int)
    c.add_argument("--k", type=int)
    c.add_argument("--N", type=int)
    c.add_argument("--eps", type=float)
    c.add_argument("--auto-N", dest="auto_N", action="store_true")
    c.add_argument("--n-cap", dest="n_cap", type=int)
    c.add_argument("--out", help="certificate JSON")
    c.add_argument("--report", help="report JSON")
    c.set_defaults(func=cmd_certify)

    o = sub.add_parser("optimize", help="robust optimisation bounds by order k")
    o.add_argument("problem")
    o.add_argument("--k", type=int)
    o.add_argument("--eps", type=float)
    o.add_argument("--schedule", help="k range such as 1..3 or 1,2,4")
    o.add_argument("--jobs", type=int, default=1)
    o.set_defaults(func=cmd_optimize)

    m = sub.add_parser("moments", help="moment-sequence tools")
    msub = m.add_subparsers(dest="moments_command", required=True)
    mc = msub.add_parser("check", help="finite-order necessary test for a representing measure")
    mc.add_argument("moments")
    mc.add_argument("--problem", help="problem JSON providing G and the measure")
    mc.add_argument("--C", type=float, required=True)
    mc.add_argument("--d", type=int, required=True)
    mc.add_argument("--k", type=int, default=0)
    mc.add_argument("--out")
    mc.set_defaults(func=cmd_moments_check)

    e = sub.add_parser("export", help="write the SDP in SDPA sparse format")
    e.add_argument("problem", help="problem JSON, or {\"conic\": ...} for a raw SDP")
    e.add_argument("--hierarchy", choices=HIERARCHIES, default="membership")
    e.add_argument("--d", type=int)
    e.add_argument("--k", type=int)
    e.add_argument("--N", type=int)
    e.add_argument("--eps", type=float)
    e.add_argument("--out")
    e.add_argument("--solve-external", action="store_true",
                   help=f"run the solver named by ${SDPA_ENV} and import its result")
    e.set_defaults(func=cmd_export)

    v = sub.add_parser("verify", help="check a certificate against its problem")
    v.add_argument("problem")
    v.add_argument("certificate")
    v.add_argument("--tol", type=float)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    pm = sub.add_parser("propmain", help="constructive multiplier sweep over k")
    pm.add_argument("problem")
    pm.add_argument("--C", type=float, required=True)
    pm.add_argument("--M", type=float)
    pm.add_argument("--kmin", type=int, default=0)
    pm.add_argument("--kmax", type=int, default=12)
    pm.add_argument("--density", type=int, default=41)
    pm.add_argument("--out")
    pm.set_defaults(func=cmd_propmain)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_SCHEMA if exc.code else EXIT_OK
    try:
        if args.config:
            config.DEFAULTS = config.load_tolerances(args.config)
        return args.func(args)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except DeskCapExceeded as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
