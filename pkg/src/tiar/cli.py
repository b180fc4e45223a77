"""Command-line harness: ``tiar solve``, ``tiar oracle`` and ``tiar compare``.

Exit codes: 0 success, 1 input error, 2 not converged, 3 oracle mismatch.
Outputs are plain CSV/JSON so they can be plotted with any tool.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
import warnings
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
from scipy.optimize import linear_sum_assignment

from .driver import ConvergenceTrace, SolverConfig, Strategy, estimate_complexity, solve
from .errors import NotConverged, TiarError
from .expansion import expand, start_factorization
from .nep import MdVariant, NepProblem, dep_from_matrix_market, dep_grid, load_matrix_market, polynomial_nep
from .oracle import arnoldi, companion_matrix, lifted_start

log = logging.getLogger("tiar")

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_MISMATCH = 0, 1, 2, 3
ORACLE_TOL = 1e-8
ORACLE_MAX_DIM = 5000
MATCH_TOL = 1e-8

_CONFIG_DEFAULTS = {
    "problem": "dep",
    "grid": 11,
    "tau": 1.0,
    "a0": None,
    "a1": None,
    "a2": None,
    "coeff": None,
    "m": 20,
    "p": 5,
    "strategy": "implicit",
    "md_variant": "series",
    "drop_tol": 1e-14,
    "conv_tol": 1e-10,
    "max_restarts": 50,
    "seed": None,
    "k": 12,
    "out": ".",
}


class InputError(Exception):
    pass


def _add_common(ap: argparse.ArgumentParser):
    ap.add_argument("--config", help="JSON file with flat keys; flags override it")
    ap.add_argument("--problem", choices=["dep", "mtx", "poly"], help="problem source (default dep)")
    ap.add_argument("--grid", type=int, help="grid size N of the built-in DEP (n = N^2)")
    ap.add_argument("--tau", type=float, help="delay of the DEP")
    ap.add_argument("--a0", help="Matrix Market file of A0 (--problem mtx)")
    ap.add_argument("--a1", help="Matrix Market file of A1")
    ap.add_argument("--a2", help="Matrix Market file of A2")
    ap.add_argument("--coeff", action="append", help="Matrix Market coefficient A_j, repeat in order (--problem poly)")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("-v", "--verbose", action="store_true")


def _add_solver(ap: argparse.ArgumentParser, strategy: bool = True):
    ap.add_argument("--m", type=int, help="maximum factorization length")
    ap.add_argument("--p", type=int, help="number of wanted eigenvalues")
    if strategy:
        ap.add_argument("--strategy", choices=[s.value for s in Strategy])
    ap.add_argument("--md-variant", dest="md_variant", choices=[v.value for v in MdVariant])
    ap.add_argument("--drop-tol", dest="drop_tol", type=float)
    ap.add_argument("--conv-tol", dest="conv_tol", type=float)
    ap.add_argument("--max-restarts", dest="max_restarts", type=int)
    ap.add_argument("--seed", type=int, help="random start vector seed (default: all ones)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tiar", description="Restarted tensor infinite Arnoldi for nonlinear eigenproblems")
    sub = ap.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("solve", help="compute eigenvalues closest to the origin")
    _add_common(sp)
    _add_solver(sp)
    op = sub.add_parser("oracle", help="compare the expansion with Arnoldi on the companion matrix")
    _add_common(op)
    op.add_argument("--k", type=int, help="factorization length")
    op.add_argument("--md-variant", dest="md_variant", choices=[v.value for v in MdVariant])
    op.add_argument("--flip-sign", action="store_true", help="debug: use the wrong sign in the operator")
    cp = sub.add_parser("compare", help="run both restart strategies on one problem")
    _add_common(cp)
    _add_solver(cp, strategy=False)
    return ap


def _settings(args: argparse.Namespace) -> dict:
    cfg = dict(_CONFIG_DEFAULTS)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _load_problem(cfg: dict) -> NepProblem:
    kind = cfg["problem"]
    try:
        if kind == "dep":
            if int(cfg["grid"]) < 2:
                raise InputError("grid size must be at least 2")
            return dep_grid(int(cfg["grid"]), tau=float(cfg["tau"]))
        if kind == "mtx":
            paths = [cfg["a0"], cfg["a1"], cfg["a2"]]
            if any(p is None for p in paths):
                raise InputError("--problem mtx needs --a0, --a1 and --a2")
            for p in paths:
                if not Path(p).is_file():
                    raise InputError(f"matrix file not found: {p}")
            return dep_from_matrix_market(*paths, tau=float(cfg["tau"]))
        if kind == "poly":
            paths = cfg["coeff"] or []
            if len(paths) < 2:
                raise InputError("--problem poly needs at least two --coeff files")
            for p in paths:
                if not Path(p).is_file():
                    raise InputError(f"matrix file not found: {p}")
            mats = [load_matrix_market(p) for p in paths]
            if len({A.shape for A in mats}) != 1:
                raise InputError("coefficient matrices have different shapes")
            return polynomial_nep(mats)
    except (ValueError, OSError, TiarError) as exc:
        raise InputError(f"{type(exc).__name__}: {exc}") from exc
    raise InputError(f"unknown problem kind {kind!r}")


def _solver_config(cfg: dict, strategy: str | None = None) -> SolverConfig:
    try:
        return SolverConfig(
            m=int(cfg["m"]),
            p=int(cfg["p"]),
            max_restarts=int(cfg["max_restarts"]),
            conv_tol=float(cfg["conv_tol"]),
            drop_tol=float(cfg["drop_tol"]),
            strategy=strategy or cfg["strategy"],
            md_variant=cfg["md_variant"],
            seed=cfg["seed"],
            measure_bounds=True,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _run(problem: NepProblem, config: SolverConfig) -> dict:
    t0 = time.perf_counter()
    status = "converged"
    try:
        pairs, trace = solve(problem, config)
        if trace.rows and trace.rows[-1].r_restart < 0 and trace.rows[-1].iteration < config.max_restarts and len(pairs) < config.p:
            status = "breakdown"
    except NotConverged as exc:
        pairs, trace, status = exc.eigenpairs, exc.trace, "not_converged"
    seconds = time.perf_counter() - t0
    violations = sum(len(rep.violations()) for row in trace.rows for rep in row.compression)
    return {
        "config": {
            "m": config.m,
            "p": config.p,
            "strategy": config.strategy.value,
            "md_variant": config.md_variant.value,
            "conv_tol": config.conv_tol,
            "drop_tol": config.drop_tol,
            "max_restarts": config.max_restarts,
            "seed": config.seed,
        },
        "status": status,
        "n_converged": len(pairs),
        "restarts": trace.restarts,
        "r_max": trace.r_max,
        "peak_bytes": trace.peak_bytes,
        "seconds": seconds,
        "bound_violations": violations,
        "complexity": estimate_complexity(config, problem),
        "eigenvalues": [
            {"re": float(e.value.real), "im": float(e.value.imag), "residual": float(e.residual)} for e in pairs
        ],
        "_trace": trace,
    }


TRACE_FIELDS = [
    "iteration", "p_locked", "n_converged", "min_estimate", "max_estimate",
    "r", "d", "r_restart", "d_restart", "bytes", "seconds",
]


def _trace_rows(trace: ConvergenceTrace, strategy: str | None = None):
    for row in trace.rows:
        rec = {f: getattr(row, f) for f in TRACE_FIELDS}
        if strategy is not None:
            rec = {"strategy": strategy, **rec}
        yield rec


def _write_csv(path: Path, fields, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def _schema() -> dict:
    text = resources.files("tiar").joinpath("schemas/summary.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def _write_summary(path: Path, summary: dict):
    jsonschema.validate(summary, _schema())
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc}") from exc
    return out


def cmd_solve(args) -> int:
    cfg = _settings(args)
    problem = _load_problem(cfg)
    config = _solver_config(cfg)
    out = _outdir(cfg)
    run = _run(problem, config)
    trace = run.pop("_trace")
    _write_csv(out / "eigenvalues.csv", ["re", "im", "residual"], run["eigenvalues"])
    _write_csv(out / "trace.csv", TRACE_FIELDS, _trace_rows(trace))
    _write_summary(out / "summary.json", {"command": "solve", "problem": {"name": problem.name, "n": problem.n}, "runs": [run]})
    print(f"{problem.name}: n={problem.n} {run['status']} {run['n_converged']}/{config.p} after {run['restarts']} restarts"
          f" ({run['seconds']:.2f}s)")
    for e in run["eigenvalues"]:
        print(f"  {e['re']: .12f} {e['im']:+.12f}i  residual {e['residual']:.2e}")
    return EXIT_OK if run["status"] != "not_converged" else EXIT_NOT_CONVERGED


def _match_count(a: list[complex], b: list[complex], tol: float) -> int:
    if not a or not b:
        return 0
    A, B = np.array(a), np.array(b)
    cost = np.abs(A[:, None] - B[None, :])
    rows, cols = linear_sum_assignment(cost)
    return int(np.sum(cost[rows, cols] <= tol * np.maximum(1.0, np.abs(A[rows]))))


def cmd_compare(args) -> int:
    cfg = _settings(args)
    problem = _load_problem(cfg)
    out = _outdir(cfg)
    runs, traces = [], []
    for strategy in (Strategy.SEMI_EXPLICIT, Strategy.IMPLICIT):
        run = _run(problem, _solver_config(cfg, strategy.value))
        traces.append((strategy.value, run.pop("_trace")))
        runs.append(run)
    vals = [[complex(e["re"], e["im"]) for e in r["eigenvalues"]] for r in runs]
    matched = _match_count(vals[0], vals[1], MATCH_TOL)
    rows = [rec for name, tr in traces for rec in _trace_rows(tr, name)]
    _write_csv(out / "trace.csv", ["strategy"] + TRACE_FIELDS, rows)
    eig_rows = [{"strategy": r["config"]["strategy"], **e} for r in runs for e in r["eigenvalues"]]
    _write_csv(out / "eigenvalues.csv", ["strategy", "re", "im", "residual"], eig_rows)
    _write_summary(out / "summary.json", {
        "command": "compare",
        "problem": {"name": problem.name, "n": problem.n},
        "matched": matched,
        "match_tol": MATCH_TOL,
        "runs": runs,
    })
    for r in runs:
        print(f"{r['config']['strategy']:>13}: {r['status']} {r['n_converged']}/{r['config']['p']}"
              f" restarts={r['restarts']} r_max={r['r_max']} peak={r['peak_bytes']}B {r['seconds']:.2f}s")
    print(f"matched eigenvalues: {matched} (tol {MATCH_TOL:g})")
    if any(r["status"] == "not_converged" for r in runs):
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def oracle_compare(problem: NepProblem, k: int, md_variant="series", sign: float = -1.0):
    """Return ``(max |H_tiar - H_arnoldi|, max Ritz value distance)`` for length ``k``."""
    if k == 0:
        return 0.0, 0.0
    v = np.ones(problem.n)
    fact = expand(start_factorization(v), k, problem, md_variant, sign=sign)
    C = companion_matrix(problem, k + 1)
    _, H = arnoldi(C, lifted_start(v, k + 1), k)
    herr = float(np.max(np.abs(fact.H - H)))
    e1 = np.linalg.eigvals(fact.H[:k, :k])
    e2 = np.linalg.eigvals(H[:k, :k])
    cost = np.abs(e1[:, None] - e2[None, :])
    rows, cols = linear_sum_assignment(cost)
    return herr, float(np.max(cost[rows, cols]))


def cmd_oracle(args) -> int:
    cfg = _settings(args)
    problem = _load_problem(cfg)
    k = int(cfg["k"])
    if k < 0:
        raise InputError("k must be non-negative")
    if problem.n * (k + 1) > ORACLE_MAX_DIM:
        raise InputError(f"companion matrix too large: n*(k+1) = {problem.n * (k + 1)} > {ORACLE_MAX_DIM}")
    sign = 1.0 if args.flip_sign else -1.0
    herr, rerr = oracle_compare(problem, k, cfg["md_variant"], sign)
    print(f"{problem.name}: n={problem.n} k={k}")
    print(f"max |H_tiar - H_companion| = {herr:.3e}")
    print(f"max Ritz value distance    = {rerr:.3e}")
    ok = herr <= ORACLE_TOL and rerr <= ORACLE_TOL
    print("MATCH" if ok else "MISMATCH")
    return EXIT_OK if ok else EXIT_MISMATCH


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    warnings.simplefilter("default" if args.verbose else "ignore")
    handler = {"solve": cmd_solve, "oracle": cmd_oracle, "compare": cmd_compare}[args.command]
    try:
        return handler(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except TiarError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
