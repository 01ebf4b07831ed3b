"""Command-line front end: JSON problem files in, CSV tables and JSON reports out.

Commands
--------
``check``     lint the kernel and field hypotheses
``solve``     Picard fixed point, trajectory table
``select``    successive-approximation scheme, solution and ledger tables
``funnel``    bang-bang funnel sample, cross-section table
``periodic``  periodic trajectory for a semigroup kernel
``example``   print a built-in problem file

Exit codes: 0 success, 1 domain failure (lint, ledger, convergence or
smallness), 2 usage or parse error.  Output files go to ``--out``, else to
``$VINCLUSION_OUT``, else to ``./vinclusion-out``.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .fields import AffineBallField, AffineBoxField, FieldData, SingletonField, coefficient
from .funnel import OracleError, sample_funnel, scalar_envelope_oracle
from .kernels import ConstantKernel, SemigroupKernel, SeparableKernel
from .operators import ProblemInstance, nemytskii_residual
from .solvers import LedgerViolation, SmallnessError, periodic_solve, picard_solve, selection_scheme_solve
from .timebase import Grid, ScalarTable, Selection, Trajectory

PROBLEM_SCHEMA = "vinclusion-problem/1"
REPORT_SCHEMA = "vinclusion-report/1"
CSV_SCHEMA = "vinclusion-csv/1"
OUT_ENV = "VINCLUSION_OUT"

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2

DEFAULT_TOLERANCES = {"tol": 1e-8, "traj_tol": 1e-6, "max_iter": 200}


class ProblemError(ValueError):
    """Malformed or inconsistent problem file."""


# ---------------------------------------------------------------------------
# problem files


def _scalar_problem(field: dict, kernel: dict, h, N: int = 256, p: float = 1.0, d: int = 1) -> dict:
    return {"schema_version": PROBLEM_SCHEMA, "d": d, "T": 1.0, "N": N, "p": p,
            "kernel": kernel, "field": field, "h": h, "rng_seed": 0,
            "tolerances": dict(DEFAULT_TOLERANCES)}


BUILTIN_PROBLEMS = {
    "reference": _scalar_problem({"variant": "affine_box", "C": [[1.0]], "d": [0.0], "r": [1.0]},
                                 {"variant": "constant", "matrix": [[1.0]]}, [0.0]),
    "reference-p2": _scalar_problem({"variant": "affine_box", "C": [[1.0]], "d": [0.0], "r": [1.0]},
                                    {"variant": "constant", "matrix": [[1.0]]}, [0.0], p=2.0),
    "exponential": _scalar_problem({"variant": "singleton", "family": "linear", "matrix": [[1.0]]},
                                   {"variant": "constant", "matrix": [[1.0]]}, [1.0]),
    "fading-box": _scalar_problem(
        {"variant": "affine_box", "C": [[0.5]], "d": {"terms": [{"family": "sin", "omega": 3.0, "value": [1.0]}]},
         "r": [0.25]},
        {"variant": "separable", "terms": [{"a": {"family": "exp", "rate": -1.0},
                                            "b": {"family": "exp", "rate": 1.0}, "matrix": [[1.0]]}]},
        {"terms": [{"family": "cos", "omega": 2.0, "value": [1.0]}]}),
    "ball-2d": _scalar_problem(
        {"variant": "affine_ball", "C": [[0.5, 0.0], [0.0, 0.5]], "d": [0.0, 0.0], "rho": 0.5},
        {"variant": "constant", "matrix": [[1.0, 0.0], [0.0, 1.0]]}, [1.0, 0.0], N=128, d=2),
    "periodic": _scalar_problem({"variant": "singleton", "family": "constant", "value": [1.0]},
                                {"variant": "semigroup", "generator": [[1.0]]}, [0.0]),
}


def _need(block: dict, key: str, where: str):
    if not isinstance(block, dict) or key not in block:
        raise ProblemError(f"{where}: missing key {key!r}")
    return block[key]


def build_kernel(spec: dict, d: int):
    variant = _need(spec, "variant", "kernel")
    if variant == "constant":
        k = ConstantKernel(_need(spec, "matrix", "kernel"))
    elif variant == "semigroup":
        k = SemigroupKernel(_need(spec, "generator", "kernel"))
    elif variant == "separable":
        terms = [(_need(t, "a", "kernel term"), _need(t, "b", "kernel term"), _need(t, "matrix", "kernel term"))
                 for t in _need(spec, "terms", "kernel")]
        k = SeparableKernel(tuple(terms))
    else:
        raise ProblemError(f"unknown kernel variant {variant!r}")
    if k.dim != d:
        raise ProblemError(f"kernel dimension {k.dim} differs from d = {d}")
    return k


def build_field(spec: dict, d: int, T: float):
    variant = _need(spec, "variant", "field")
    if variant == "affine_box":
        F = AffineBoxField(_need(spec, "C", "field"), spec.get("d"), spec.get("r", 0.0), T)
    elif variant == "affine_ball":
        F = AffineBallField(_need(spec, "C", "field"), spec.get("d"), spec.get("rho", 0.0), T)
    elif variant == "singleton":
        family = _need(spec, "family", "field")
        if family == "affine":
            F = SingletonField.affine(_need(spec, "C", "field"), spec.get("d"), T)
        elif family == "constant":
            F = SingletonField.constant(_need(spec, "value", "field"))
        elif family == "zero":
            F = SingletonField.zero(int(_need(spec, "dim", "field")))
        elif family == "linear":
            F = SingletonField.linear(_need(spec, "matrix", "field"))
        elif family == "sine":
            F = SingletonField.sine(float(_need(spec, "amplitude", "field")), int(spec.get("dim", d)))
        else:
            raise ProblemError(f"unknown singleton family {family!r}")
    else:
        raise ProblemError(f"unknown field variant {variant!r}")
    if F.dim != d:
        raise ProblemError(f"field dimension {F.dim} differs from d = {d}")
    return F


def _node_table(values, grid: Grid, name: str) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.shape != (grid.N + 1,):
        raise ProblemError(f"data table {name!r} needs {grid.N + 1} entries, got shape {v.shape}")
    return v


class Problem:
    """Parsed problem file."""

    def __init__(self, doc: dict):
        if not isinstance(doc, dict):
            raise ProblemError("problem file must hold a JSON object")
        version = doc.get("schema_version")
        if version != PROBLEM_SCHEMA:
            raise ProblemError(f"schema_version must be {PROBLEM_SCHEMA!r}, got {version!r}")
        try:
            self.d = int(_need(doc, "d", "problem"))
            self.grid = Grid(float(_need(doc, "T", "problem")), int(_need(doc, "N", "problem")))
            self.p = float(doc.get("p", 1.0))
            self.rng_seed = int(doc.get("rng_seed", 0))
            self.tolerances = {**DEFAULT_TOLERANCES, **doc.get("tolerances", {})}
            self.kernel_spec = _need(doc, "kernel", "problem")
            self.kernel = build_kernel(self.kernel_spec, self.d)
            self.field = build_field(_need(doc, "field", "problem"), self.d, self.grid.T)
            h = coefficient(_need(doc, "h", "problem"), (self.d,), self.grid.T)
            self.h = Trajectory(self.grid, h(self.grid.nodes))
            self.data, self.mu = self._data(doc.get("data") or {})
        except ProblemError:
            raise
        except (TypeError, ValueError, KeyError, IndexError) as exc:
            raise ProblemError(str(exc)) from exc
        self.doc = doc

    def _data(self, block: dict):
        g = self.grid
        unknown = set(block) - {"alpha", "beta", "c", "mu"}
        if unknown:
            raise ProblemError(f"unknown data tables {sorted(unknown)}")
        data = mu = None
        if {"alpha", "beta", "c"} & set(block):
            a = block.get("alpha")
            b = block.get("beta")
            a = self.field.alpha(g.nodes) if a is None else _node_table(a, g, "alpha")
            b = self.field.beta(g.nodes) if b is None else _node_table(b, g, "beta")
            c = block.get("c")
            c = np.maximum(a, b) if c is None else _node_table(c, g, "c")
            data = FieldData(ScalarTable(g, a, True), ScalarTable(g, b, True), ScalarTable(g, c, True))
        if "mu" in block:
            mu = ScalarTable(g, _node_table(block["mu"], g, "mu"), True)
        return data, mu

    def instance(self) -> ProblemInstance:
        return ProblemInstance(self.kernel, self.field, self.h, self.p, self.data, self.mu, self.rng_seed)


def load_problem(path) -> Problem:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ProblemError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    return Problem(doc)


# ---------------------------------------------------------------------------
# output


def _num(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def write_csv(path: Path, header: list[str], rows, sampling: str) -> int:
    """Write a versioned CSV; returns the number of data rows."""
    rows = [[_num(v) if not isinstance(v, str) else v for v in r] for r in rows]
    with open(path, "w", newline="") as fh:
        fh.write(f"# {CSV_SCHEMA} sampling={sampling} rows={len(rows)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return len(rows)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else _num(x)
    return obj


def write_report(path: Path, report: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(_clean(report), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _out_dir(arg) -> Path:
    out = Path(arg or os.environ.get(OUT_ENV) or "vinclusion-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cols(prefix: str, d: int) -> list[str]:
    return [f"{prefix}{i + 1}" for i in range(d)]


def _trajectory_rows(x: Trajectory, u: Selection, resid: np.ndarray):
    """Node rows; selection and residual columns hold the value on ``[t_i, t_{i+1})``,
    empty at the last node."""
    N = x.grid.N
    d = x.dim
    for i, t in enumerate(x.grid.nodes):
        if i < N:
            yield [t, *x.values[i], *u.values[i], resid[i]]
        else:
            yield [t, *x.values[i], *([""] * d), ""]


# ---------------------------------------------------------------------------
# commands


class Context:
    def __init__(self, args, command: str):
        self.args = args
        self.command = command
        self.problem = load_problem(args.problem)
        self.out = _out_dir(args.out)
        self.stem = Path(args.problem).stem
        self.report = {"schema_version": REPORT_SCHEMA, "command": command,
                       "problem": Path(args.problem).name, "outputs": {}}

    def path(self, suffix: str) -> Path:
        return self.out / f"{self.stem}_{self.command}{suffix}"

    def table(self, key: str, suffix: str, header, rows, sampling: str) -> None:
        p = self.path(suffix)
        n = write_csv(p, header, rows, sampling)
        self.report["outputs"][key] = {"file": p.name, "rows": n, "sampling": sampling}

    def finish(self, code: int) -> int:
        self.report["exit_code"] = code
        self.report["status"] = "ok" if code == EXIT_OK else "failed"
        p = self.path("_report.json")
        write_report(p, self.report)
        print(p)
        return code


def cmd_check(args) -> int:
    ctx = Context(args, "check")
    inst = ctx.problem.instance()
    klint, flint = inst.kernel_lint, inst.field_lint
    ctx.report["kernel_lint"] = klint.to_dict()
    ctx.report["field_lint"] = flint.to_dict()
    ctx.report["M"] = inst.M
    return ctx.finish(EXIT_OK if klint.passed and flint.passed else EXIT_DOMAIN)


def cmd_solve(args) -> int:
    ctx = Context(args, "solve")
    inst = ctx.problem.instance()
    tols = ctx.problem.tolerances
    tol = args.tol if args.tol is not None else float(tols["tol"])
    maxit = args.max_iter if args.max_iter is not None else int(tols["max_iter"])
    u0 = Selection.constant(inst.grid, np.full(inst.dim, args.seed_selection))
    res = picard_solve(inst, u0, tol=tol, maxit=maxit, traj_tol=float(tols["traj_tol"]))
    resid = nemytskii_residual(inst, res.x, res.u).pointwise
    d = inst.dim
    ctx.table("trajectory", ".csv", ["t", *_cols("x", d), *_cols("u", d), "residual"],
              _trajectory_rows(res.x, res.u, resid), "nodes")
    ctx.report["solve"] = res.report.to_dict()
    ctx.report["tolerances"] = {"tol": tol, "traj_tol": float(tols["traj_tol"]), "max_iter": maxit}
    return ctx.finish(EXIT_OK if res.report.converged else EXIT_DOMAIN)


def cmd_select(args) -> int:
    ctx = Context(args, "select")
    inst = ctx.problem.instance()
    ctx.report["tolerances"] = {"epsilon": args.epsilon, "nmax": args.nmax, "tol": args.tol}
    try:
        res = selection_scheme_solve(inst, eps=args.epsilon, nmax=args.nmax, tol=args.tol)
    except LedgerViolation as exc:
        ctx.report["violation"] = {"message": str(exc), "witness": exc.witness}
        return ctx.finish(EXIT_DOMAIN)
    resid = nemytskii_residual(inst, res.x, res.f).pointwise
    d = inst.dim
    ctx.table("solution", ".csv", ["t", *_cols("x", d), *_cols("f", d), "residual"],
              _trajectory_rows(res.x, res.f, resid), "nodes")
    ctx.table("ledger", "_ledger.csv", ["n", "t", "beta_n", "iii_margin", "increment_bound"],
              ([n, t, b, m, ib] for n, t, b, m, ib in res.ledger.rows()), "ledger-nodes")
    ctx.report["ledger"] = res.ledger.to_dict()
    ctx.report["iterations"] = res.iterations
    ctx.report["residual"] = res.residual
    return ctx.finish(EXIT_OK if res.ledger.passed else EXIT_DOMAIN)


def cmd_funnel(args) -> int:
    ctx = Context(args, "funnel")
    inst = ctx.problem.instance()
    seed = ctx.problem.rng_seed if args.rng_seed is None else args.rng_seed
    tol = float(ctx.problem.tolerances["tol"])
    sample = sample_funnel(inst, args.K, seed, tol=min(tol, 1e-10), jobs=args.jobs)
    lo, hi, mean = sample.lower, sample.upper, sample.centroid
    d = inst.dim
    header = ["t"] + [f"x{i + 1}_{s}" for i in range(d) for s in ("min", "max", "centroid")]
    env = None
    try:
        env = scalar_envelope_oracle(inst)
    except OracleError as exc:
        ctx.report["oracle"] = {"applies": False, "reason": str(exc)}
    rows = []
    for i, t in enumerate(inst.grid.nodes):
        row = [t] + [v for j in range(d) for v in (lo[i, j], hi[i, j], mean[i, j])]
        if env is not None:
            row += [env[0].values[i, 0], env[1].values[i, 0]]
        rows.append(row)
    if env is not None:
        header += ["envelope_min", "envelope_max"]
        slack = max(float(np.max(env[0].values - lo)), float(np.max(hi - env[1].values)))
        width = float(env[1].values[-1, 0] - env[0].values[-1, 0])
        att = (min(1.0, (hi[-1, 0] - lo[-1, 0]) / width) if width > 0 else 1.0)
        ctx.report["oracle"] = {"applies": True, "max_outside": slack, "attainment_at_T": att}
    ctx.table("cross_sections", ".csv", header, rows, "nodes")
    ctx.report["funnel"] = {"K": args.K, "rng_seed": seed, "jobs": args.jobs, **sample.to_dict()}
    ctx.report["tolerances"] = {"tol": min(tol, 1e-10)}
    return ctx.finish(EXIT_OK if not sample.failed else EXIT_DOMAIN)


def cmd_periodic(args) -> int:
    ctx = Context(args, "periodic")
    prob = ctx.problem
    if prob.kernel_spec.get("variant") != "semigroup":
        raise ProblemError("periodic needs a semigroup kernel")
    tol = args.tol if args.tol is not None else float(prob.tolerances["tol"])
    ctx.report["tolerances"] = {"tol": tol, "max_outer": args.max_outer}
    try:
        res = periodic_solve(prob.kernel.generator, prob.field, prob.grid, p=prob.p, tol=tol,
                             maxouter=args.max_outer)
    except SmallnessError as exc:
        ctx.report["violation"] = {"message": str(exc)}
        return ctx.finish(EXIT_DOMAIN)
    d = prob.d
    inst = ProblemInstance(prob.kernel, prob.field, Trajectory(prob.grid, np.zeros_like(res.x.values)), prob.p)
    resid = nemytskii_residual(inst, res.x, res.u).pointwise
    ctx.table("trajectory", ".csv", ["t", *_cols("x", d), *_cols("u", d), "residual"],
              _trajectory_rows(res.x, res.u, resid), "nodes")
    ctx.report["periodic"] = {"x0": res.x0, **res.report.to_dict()}
    ok = res.report.converged and res.report.R_bound_ok
    return ctx.finish(EXIT_OK if ok else EXIT_DOMAIN)


def cmd_example(args) -> int:
    doc = json.dumps(BUILTIN_PROBLEMS[args.name], indent=2, sort_keys=True) + "\n"
    if args.output:
        Path(args.output).write_text(doc)
    else:
        sys.stdout.write(doc)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vinclusion", description="Volterra integral inclusions on a grid.")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_problem(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("problem", help="JSON problem file")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./vinclusion-out)")
        return sp

    with_problem("check", "lint kernel and field hypotheses").set_defaults(func=cmd_check)

    sp = with_problem("solve", "Picard fixed point")
    sp.add_argument("--seed-selection", type=float, default=0.0, help="constant initial selection")
    sp.add_argument("--tol", type=float)
    sp.add_argument("--max-iter", type=int)
    sp.set_defaults(func=cmd_solve)

    sp = with_problem("select", "successive-approximation scheme with ledger")
    sp.add_argument("--epsilon", type=float, default=0.1)
    sp.add_argument("--nmax", type=int, default=30)
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.set_defaults(func=cmd_select)

    sp = with_problem("funnel", "sample the solution funnel")
    sp.add_argument("--K", type=int, default=32)
    sp.add_argument("--rng-seed", type=int)
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_funnel)

    sp = with_problem("periodic", "periodic trajectory for a semigroup kernel")
    sp.add_argument("--tol", type=float)
    sp.add_argument("--max-outer", type=int, default=200)
    sp.set_defaults(func=cmd_periodic)

    sp = sub.add_parser("example", help="print a built-in problem file")
    sp.add_argument("name", choices=sorted(BUILTIN_PROBLEMS))
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_example)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ProblemError as exc:
        print(f"vinclusion: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
