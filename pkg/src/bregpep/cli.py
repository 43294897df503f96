"""Command-line interface.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 numerical
failure (solver iteration cap, infeasible program, budget violation).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import algorithms, certificates, instances, pep, sdp
from .model import ProblemParams, numerical_rank, representation_from_gram

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

ALGOS = ("nolips", "nolips-orth", "residual", "iga", "iga-hsmooth")


class UsageError(Exception):
    pass


def _settings(args) -> sdp.SolverSettings:
    kw = {}
    if getattr(args, "eps", None) is not None:
        kw["eps_abs"] = kw["eps_rel"] = args.eps
    if getattr(args, "max_iter", None) is not None:
        kw["max_iter"] = args.max_iter
    return sdp.SolverSettings(**kw)


def build_program(algo, N, lam, L, Ltilde=None, sigma=None):
    params = ProblemParams(L=L, lam=lam, N=N)
    if algo == "nolips":
        return pep.build_nolips_pep(params)
    if algo == "nolips-orth":
        return pep.build_orthogonal_pep(params)
    if algo == "residual":
        if N < 2:
            raise UsageError("--algo residual needs --N >= 2")
        return pep.build_residual_pep(params)
    if algo == "iga":
        return pep.build_iga_pep(params, Ltilde if Ltilde is not None else 1.0,
                                 sigma if sigma is not None else 1.0)
    if algo == "iga-hsmooth":
        return pep.build_iga_hsmooth_pep(params)
    raise UsageError(f"unknown algorithm {algo}")


def _theory(prog):
    return prog.meta.get("theory")


def solve_row(algo, N, lam, L, Ltilde=None, sigma=None, eps=None, max_iter=None):
    """One PEP solve summarised as a flat dict (used by ``pep solve`` and ``sweep``)."""
    prog = build_program(algo, N, lam, L, Ltilde, sigma)
    ns = argparse.Namespace(eps=eps, max_iter=max_iter)
    sol = pep.solve_pep(prog, _settings(ns))
    theory = _theory(prog)
    if algo in ("nolips", "nolips-orth") and lam * L > 1:
        theory = None
    rel = None
    if theory is not None and sol.status == sdp.OPTIMAL:
        rel = abs(sol.value - theory) / abs(theory)
    return prog, sol, {
        "algo": algo, "N": N, "lambda": lam, "L": L,
        "value": sol.value, "status": sol.status, "theory": theory, "rel_error": rel,
        "primal_feasibility": sol.report.get("max_violation"),
        "solve_time": sol.report.get("solve_time"), "iterations": sol.report.get("iterations"),
    }


def _strict(o):
    # JSON has no infinities; the status field carries that information
    if isinstance(o, float) and not math.isfinite(o):
        return None
    if isinstance(o, dict):
        return {k: _strict(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_strict(v) for v in o]
    return o


def _emit(obj, out, fmt):
    if fmt == "json":
        text = json.dumps(_strict(obj), indent=2, default=_json_default, allow_nan=False)
    else:
        rows = obj if isinstance(obj, list) else [obj]
        rows = [{k: v for k, v in r.items() if not isinstance(v, (dict, list))} for r in rows]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
        w.writeheader()
        for r in rows:
            w.writerow(r)
        text = buf.getvalue()
    if out in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if hasattr(o, "to_dict"):
        return o.to_dict()
    return str(o)


def cmd_pep_solve(args) -> int:
    if args.algo != "iga" and (args.Ltilde is not None or args.sigma is not None):
        raise UsageError("--Ltilde/--sigma only apply to --algo iga")
    if args.low_rank is not None and args.algo not in ("nolips", "nolips-orth", "residual"):
        raise UsageError("--low-rank is only available for the NoLips programs")
    prog, sol, row = solve_row(args.algo, args.N, args.lam, args.L, args.Ltilde, args.sigma,
                               args.eps, args.max_iter)
    row["unbounded"] = sol.status == sdp.UNBOUNDED
    if args.low_rank is not None and sol.status == sdp.OPTIMAL:
        ref = pep.low_rank_refine(prog, sol, args.low_rank, _settings(args))
        row["refined_value"] = ref.value
        row["refined_rank"] = numerical_rank(ref.G)
        row["refined_warning"] = ref.warning
        if args.format == "json" and ref.matrices is not None:
            row["representation"] = representation_from_gram(ref.matrices, params=prog.meta["params"]).to_dict()
    _emit(row, args.out, args.format)
    if sol.status in (sdp.MAXITER, sdp.INFEASIBLE):
        return EXIT_NUMERIC
    return EXIT_OK


def _parse_list(text):
    try:
        vals = [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise UsageError(f"bad --N-list {text!r}") from exc
    if not vals:
        raise UsageError("--N-list is empty")
    return vals


def _sweep_worker(job):
    algo, N, lam, L, Ltilde, sigma, eps, max_iter = job
    try:
        _, _, row = solve_row(algo, N, lam, L, Ltilde, sigma, eps, max_iter)
    except Exception as exc:  # recorded, the sweep goes on
        row = {"algo": algo, "N": N, "lambda": lam, "L": L, "value": math.nan, "status": "Error",
               "theory": None, "rel_error": None, "primal_feasibility": None, "solve_time": None,
               "iterations": None, "error": str(exc)}
    return row


SWEEP_COLUMNS = ["N", "value", "theory", "rel_error", "primal_feasibility", "status", "solve_time"]


def cmd_sweep(args) -> int:
    Ns = _parse_list(args.N_list)
    jobs = [(args.algo, N, args.lam, args.L, args.Ltilde, args.sigma, args.eps, args.max_iter) for N in Ns]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            rows = list(ex.map(_sweep_worker, jobs))
    else:
        rows = [_sweep_worker(j) for j in jobs]
    table = [{c: r.get(c) for c in SWEEP_COLUMNS} for r in rows]
    _emit(table, args.out, args.format)
    return EXIT_OK


def cmd_lower_bound(args) -> int:
    if not 0 < args.eps_lb < 1:
        raise UsageError("--eps must lie in (0, 1)")
    try:
        rep = algorithms.lower_bound_experiment(args.N, args.eps_lb, args.strategy, args.L)
    except (algorithms.BudgetError, algorithms.SpanError) as exc:
        print(f"strategy violated the oracle model: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out = {k: rep[k] for k in ("N", "eps", "n", "mu", "eta", "strategy", "gap", "bound", "ratio", "pass")}
    _emit(out, args.out, args.format)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.which == "prop46" and args.k < 2:
        raise UsageError("prop46 needs --k >= 2")
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    if args.trials < 1:
        raise UsageError("--trials must be positive")
    make = certificates.thm31_weights if args.which == "thm31" else certificates.prop46_weights
    worst, worst_seed = 0.0, None
    rng = np.random.default_rng(args.seed)
    for trial in range(args.trials):
        seed = int(rng.integers(2 ** 32))
        lam = float(np.exp(rng.uniform(-1, 1)))
        rep = certificates.random_representation(args.k, lam, dim=3, seed=seed)
        r = certificates.verify_identity(make(args.k, lam), rep, args.which)
        if r > worst:
            worst, worst_seed = r, seed
    ok = bool(worst <= 1e-10)
    print(json.dumps({"which": args.which, "k": args.k, "trials": args.trials,
                      "max_residual": worst, "ok": ok}))
    if not ok:
        print(f"residual above threshold for seed {worst_seed}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def _parse_grid(text):
    try:
        a, b, m = text.split(":")
        a, b, m = float(a), float(b), int(m)
    except ValueError as exc:
        raise UsageError(f"grid must be lo:hi:count, got {text!r}") from exc
    if m < 1:
        raise UsageError("grid must contain at least one point")
    return np.linspace(a, b, m)


def cmd_sample_instance(args) -> int:
    g1 = _parse_grid(args.grid)
    params = {"N": args.N, "mu": args.mu}
    if args.instance == "lower-bound":
        params = {"n": args.n, "mu": args.mu}
        if args.eta is not None:
            params["eta"] = args.eta
        dim = args.n
    elif args.instance == "pathological-nd":
        dim = args.N
    else:
        dim = 1
    if args.grid2 is not None:
        if dim != 2:
            raise UsageError("--grid2 (mesh sampling) needs a two-dimensional instance")
        grid = (g1, _parse_grid(args.grid2))
    elif dim == 2:
        grid = (g1, g1)
    else:
        grid = g1
    try:
        cols, rows = instances.sample_instance(args.instance, grid, **params)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    table = [dict(zip(cols, map(float, r))) for r in rows]
    _emit(table, args.out, args.format)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bregpep", description="Worst-case analysis of Bregman methods.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def solver_flags(sp):
        sp.add_argument("--eps", type=float, default=None, help="solver tolerance (default $BREGPEP_EPS or 1e-8)")
        sp.add_argument("--max-iter", type=int, default=None)

    def out_flags(sp, default="json"):
        sp.add_argument("--out", default=None, help="output path (default stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default=default)

    pp = sub.add_parser("pep", help="performance estimation programs")
    psub = pp.add_subparsers(dest="pep_command", required=True)
    ps = psub.add_parser("solve", help="solve one program")
    ps.add_argument("--algo", choices=ALGOS, required=True)
    ps.add_argument("--N", type=int, required=True)
    ps.add_argument("--lambda", dest="lam", type=float, default=1.0)
    ps.add_argument("--L", type=float, default=1.0)
    ps.add_argument("--Ltilde", type=float, default=None)
    ps.add_argument("--sigma", type=float, default=None)
    ps.add_argument("--low-rank", type=float, default=None, metavar="GAP")
    solver_flags(ps)
    out_flags(ps)
    ps.set_defaults(func=cmd_pep_solve)

    sw = sub.add_parser("sweep", help="solve a program for several N")
    sw.add_argument("--algo", choices=ALGOS, required=True)
    sw.add_argument("--N-list", required=True)
    sw.add_argument("--lambda", dest="lam", type=float, default=1.0)
    sw.add_argument("--L", type=float, default=1.0)
    sw.add_argument("--Ltilde", type=float, default=None)
    sw.add_argument("--sigma", type=float, default=None)
    sw.add_argument("--jobs", type=int, default=1)
    solver_flags(sw)
    out_flags(sw, "csv")
    sw.set_defaults(func=cmd_sweep)

    lb = sub.add_parser("lower-bound", help="lower-bound experiment on the zero-preserving pair")
    lb.add_argument("--N", type=int, required=True)
    lb.add_argument("--eps", dest="eps_lb", type=float, required=True)
    lb.add_argument("--strategy", choices=("nolips", "iga"), default="nolips")
    lb.add_argument("--L", type=float, default=1.0)
    out_flags(lb)
    lb.set_defaults(func=cmd_lower_bound)

    vf = sub.add_parser("verify", help="check a certificate identity on random data")
    vf.add_argument("--which", choices=("thm31", "prop46"), required=True)
    vf.add_argument("--k", type=int, required=True)
    vf.add_argument("--trials", type=int, default=200)
    vf.add_argument("--seed", type=int, default=0)
    vf.set_defaults(func=cmd_verify)

    si = sub.add_parser("sample-instance", help="sample an instance for plotting")
    si.add_argument("--instance", choices=("lower-bound", "worst1d", "pathological-nd"), required=True)
    si.add_argument("--N", type=int, default=3)
    si.add_argument("--n", type=int, default=2)
    si.add_argument("--mu", type=float, default=0.1)
    si.add_argument("--eta", type=float, default=None)
    si.add_argument("--grid", default="-0.8:1.5:47", help="lo:hi:count")
    si.add_argument("--grid2", default=None, help="second axis for 2-D meshes")
    out_flags(si, "csv")
    si.set_defaults(func=cmd_sample_instance)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"bregpep: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"bregpep: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
