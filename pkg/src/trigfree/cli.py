"""Command line: ``trigfree <subcommand> ...``.

Exit codes: 0 success, 2 usage or input error, 3 numeric domain error,
4 when more than 20% of a study's fits fail to converge.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys

import numpy as np

from . import __version__
from .counts import ResourceLimitError
from .expect import M_REF, psi1_exact_finite, psi1_expect, resolve_M
from .fisher import invert, wald_ci
from .infer import Dataset, RegressionSpec, fit_regression, regression_fim
from .specfun import DomainError
from .studies import (
    SimulationReport,
    StudyConfig,
    bench_study,
    build_model,
    compare_study,
    config_hash,
    default_workers,
    fim_sim_study,
    sensitivity_study,
)

__all__ = ["DataError", "csv_ingest", "emit_csv", "main"]

EXIT_USAGE, EXIT_DOMAIN, EXIT_NONCONVERGED = 2, 3, 4


class DataError(ValueError):
    """Malformed input file."""


# ---------------------------------------------------------------- CSV data

_MISSING = {"", "na", "nan", "null", "none"}


def csv_ingest(path, response: str, factors=(), columns=None) -> Dataset:
    """Read a header CSV into a :class:`Dataset`.

    Factor columns become indicator columns ``name[level]`` with the first
    level (in sorted order) dropped.  Lines starting with ``#`` are skipped.
    """
    factors = tuple(factors or ())
    with open(path, newline="") as fh:
        lines = [(i, ln) for i, ln in enumerate(fh.read().splitlines(), start=1)
                 if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise DataError(f"{path}: no header row")
    reader = csv.reader([ln for _, ln in lines])
    header = [h.strip() for h in next(reader)]
    if response not in header:
        raise DataError(f"{path}: response column {response!r} not in header {header}")
    for f in factors:
        if f not in header:
            raise DataError(f"{path}: factor column {f!r} not in header")
    use = [c for c in header if c != response] if columns is None else list(columns)
    for c in use:
        if c not in header:
            raise DataError(f"{path}: column {c!r} not in header")
    records, missing, bad = [], [], []
    for (lineno, _), row in zip(lines[1:], reader):
        if len(row) != len(header):
            raise DataError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
        rec = dict(zip(header, (v.strip() for v in row)))
        for c in [response] + use:
            if rec[c].lower() in _MISSING:
                missing.append(f"line {lineno} column {c!r}")
        records.append((lineno, rec))
    if missing:
        raise DataError(f"{path}: missing values at " + "; ".join(missing))
    y = []
    for lineno, rec in records:
        try:
            v = float(rec[response])
        except ValueError:
            raise DataError(f"{path}: line {lineno}: response {rec[response]!r} is not a number") from None
        if not (math.isfinite(v) and v >= 0 and v == int(v)):
            raise DataError(f"{path}: line {lineno}: response {rec[response]!r} is not a non-negative integer")
        y.append(int(v))
    names, cols = [], []
    for c in use:
        if c in factors:
            levels = sorted({rec[c] for _, rec in records})
            for lev in levels[1:]:
                names.append(f"{c}[{lev}]")
                cols.append([1.0 if rec[c] == lev else 0.0 for _, rec in records])
            continue
        vals = []
        for lineno, rec in records:
            try:
                vals.append(float(rec[c]))
            except ValueError:
                bad.append(f"line {lineno} column {c!r} value {rec[c]!r}")
        cols.append(vals)
        names.append(c)
    if bad:
        raise DataError(f"{path}: non-numeric values (declare factors?) at " + "; ".join(bad))
    X = np.array(cols, dtype=float).T.reshape(len(y), len(names))
    return Dataset(np.array(y, dtype=np.int64), X, tuple(names), response)


def emit_csv(data: Dataset, path) -> None:
    """Write a dataset so that ``csv_ingest(path, data.response_name)`` reads it back."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([data.response_name, *data.names])
        for yi, xi in zip(data.responses, data.covariates):
            w.writerow([int(yi), *(repr(float(v)) for v in xi)])


# ---------------------------------------------------------------- output helpers

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def report_csv(report: SimulationReport, aggregate: bool = False) -> str:
    buf = io.StringIO()
    for line in report.header_lines():
        buf.write(line + "\r\n")
    w = csv.writer(buf)
    cols, rows = (report.aggregate_columns, report.aggregates) if aggregate else (report.columns, report.rows)
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _emit(text: str, path) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _json(obj) -> str:
    def clean(o):
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        if isinstance(o, (np.floating, float)):
            f = float(o)
            return f if math.isfinite(f) else str(f)
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.bool_):
            return bool(o)
        return o

    return json.dumps(clean(obj), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- argument parsing

def parse_grid(text: str) -> tuple[int, ...]:
    """``a:b:step`` (inclusive) or a comma list; ``1e6`` style accepted."""
    text = text.strip()
    if ":" in text:
        a, b, *s = (int(float(v)) for v in text.split(":"))
        step = s[0] if s else 1
        return tuple(range(a, b + 1, step))
    return tuple(int(float(v)) for v in text.split(",") if v.strip())


def _model_args(p):
    g = p.add_argument_group("distribution")
    g.add_argument("--family", required=True,
                   help="nb, bnb, zinb, zibnb, zanb, zabnb, binom or betabinom")
    for name in ("nu", "p", "alpha", "beta", "phi"):
        g.add_argument(f"--{name}", type=float)
    g.add_argument("--n", type=int, help="trial count for binom / betabinom")


def _params(args) -> dict:
    keys = {"nb": ("nu", "p"), "bnb": ("nu", "alpha", "beta"), "zinb": ("phi", "nu", "p"),
            "zibnb": ("phi", "nu", "alpha", "beta"), "zanb": ("phi", "nu", "p"),
            "zabnb": ("phi", "nu", "alpha", "beta"), "binom": ("n", "p"),
            "betabinom": ("n", "alpha", "beta")}
    if args.family not in keys:
        raise _Usage(f"unknown family {args.family!r}")
    out = {}
    for k in keys[args.family]:
        v = getattr(args, k)
        if v is None:
            raise _Usage(f"--{k} is required for family {args.family}")
        out[k] = v
    return out


class _Usage(Exception):
    pass


def _workers(args) -> int:
    return args.workers if args.workers is not None else default_workers()


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="trigfree", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"trigfree {__version__}")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("expect", help="one expectation E psi1(shift + Y)")
    _model_args(p)
    p.add_argument("--shift", type=float, help="defaults to --nu (or 1 without one)")
    p.add_argument("--method", default="trigamma-free",
                   choices=["trigamma-free", "calibrated", "gfwl", "monte-carlo", "exact-finite"])
    p.add_argument("--M", default="policy:default", help="integer, policy:default or tol:<t>")
    p.add_argument("--seed", type=int)

    for name, helptext in (("compare", "error curves over an M grid"),
                           ("sensitivity", "errors at parameters fitted to simulated data")):
        p = sub.add_parser(name, help=helptext)
        _model_args(p)
        p.add_argument("--shift", type=float)
        p.add_argument("--M-grid", default="10:200:10")
        p.add_argument("--M-ref", type=int, default=M_REF)
        p.add_argument("--B", type=int, default=200)
        p.add_argument("--N", type=int, default=1000)
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out")

    p = sub.add_parser("fim-sim", help="Fisher information simulation study")
    _model_args(p)
    p.add_argument("--M-grid", default="150,1000,5000,20000")
    p.add_argument("--M-ref", type=int, default=M_REF)
    p.add_argument("--methods", default="trigamma-free,calibrated,gfwl,monte-carlo")
    p.add_argument("--B", type=int, default=200)
    p.add_argument("--N", type=int, default=1000)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="per-replicate CSV (default stdout)")
    p.add_argument("--aggregate-out", help="aggregate CSV")
    p.add_argument("--json", help="JSON summary")

    p = sub.add_parser("bench", help="timing and trigamma counts")
    _model_args(p)
    p.add_argument("--shift", type=float)
    p.add_argument("--M-grid", default="1000,10000,100000")
    p.add_argument("--methods", default="trigamma-free,calibrated,gfwl")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    for name in ("regress", "ingest-check"):
        p = sub.add_parser(name, help="fit a regression from CSV" if name == "regress" else
                           "validate a CSV and summarise it")
        p.add_argument("csv")
        p.add_argument("--response", required=True)
        p.add_argument("--factors", default="", help="comma-separated factor columns")
        p.add_argument("--columns", help="comma-separated covariates (default: all)")
        if name == "regress":
            p.add_argument("--family", default="zinb", choices=["zinb", "zibnb", "zanb", "zabnb", "nb", "bnb"])
            p.add_argument("--zero-link", default="logit", choices=["logit", "probit"])
            p.add_argument("--method", default="trigamma-free",
                           choices=["trigamma-free", "calibrated", "gfwl", "monte-carlo"])
            p.add_argument("--M-grid", default="1000,5000,20000")
            p.add_argument("--level", type=float, default=0.95)
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--json")
            p.add_argument("--out", help="per-coefficient CI CSV")
    return ap


# ---------------------------------------------------------------- commands

def _shift(args, params):
    if getattr(args, "shift", None) is not None:
        return args.shift
    return params.get("nu", 1.0)


def _M_arg(text: str):
    # numbers (1e6 allowed) or a policy string; anything else is a usage error
    s = text.strip()
    try:
        v = float(s)
    except ValueError:
        body = s.removeprefix("policy:")
        if body == "default" or body.split(":", 1)[0] in ("tol", "tolerance"):
            return s
        raise _Usage(f"--M must be an integer, policy:default or tol:<t>, got {text!r}") from None
    if not (math.isfinite(v) and v == int(v)):
        raise _Usage(f"--M must be a whole number, got {text!r}")
    return int(v)


def cmd_expect(args) -> int:
    params = _params(args)
    model = build_model(args.family, params)
    nu = _shift(args, params)
    method = args.method.replace("-", "_")
    if method == "exact_finite":
        res = psi1_exact_finite(nu, model)
    else:
        M = resolve_M(nu, model, _M_arg(args.M))
        rng = None
        if method == "monte_carlo":
            if args.seed is None:
                raise _Usage("monte-carlo needs --seed")
            from .counts import make_rng

            rng = make_rng(args.seed)
        res = psi1_expect(nu, model, M, method, rng)
    out = {"family": args.family, "params": params, "shift": nu, **res.as_dict()}
    sys.stdout.write(_json(out))
    return 0


def _config(args, kind, **extra) -> StudyConfig:
    params = _params(args)
    return StudyConfig(kind=kind, family=args.family, params=params,
                       M_grid=parse_grid(args.M_grid), B=getattr(args, "B", 1),
                       N=getattr(args, "N", 1), seed=getattr(args, "seed", None),
                       workers=_workers(args) if hasattr(args, "workers") else 1, extra=extra)


def cmd_compare(args) -> int:
    params = _params(args)
    cfg = _config(args, "compare", nu=_shift(args, params), M_ref=args.M_ref)
    _emit(report_csv(compare_study(cfg)), args.out)
    return 0


def cmd_sensitivity(args) -> int:
    if args.seed is None:
        raise _Usage("sensitivity needs --seed")
    cfg = _config(args, "sensitivity", M_ref=args.M_ref)
    _emit(report_csv(sensitivity_study(cfg)), args.out)
    return 0


def cmd_fim_sim(args) -> int:
    if args.family not in ("zinb", "zibnb", "zanb", "zabnb"):
        raise _Usage("fim-sim supports zinb, zibnb, zanb and zabnb")
    methods = [m.strip().replace("-", "_") for m in args.methods.split(",") if m.strip()]
    cfg = _config(args, "fim_sim", methods=methods, M_ref=args.M_ref, level=args.level)
    rep = fim_sim_study(cfg)
    _emit(report_csv(rep), args.out)
    if args.aggregate_out:
        _emit(report_csv(rep, aggregate=True), args.aggregate_out)
    if args.json:
        summary = {
            "version": __version__,
            "config": cfg.identity(),
            "config_sha256": config_hash(cfg),
            "aggregates": [dict(zip(rep.aggregate_columns, r)) for r in rep.aggregates],
            **rep.meta,
        }
        _emit(_json(summary), args.json)
    if rep.meta["non_converged"] > 0.2 * cfg.B:
        sys.stderr.write(f"trigfree: {rep.meta['non_converged']} of {cfg.B} fits did not converge\n")
        return EXIT_NONCONVERGED
    return 0


def cmd_bench(args) -> int:
    params = _params(args)
    methods = [m.strip().replace("-", "_") for m in args.methods.split(",") if m.strip()]
    cfg = _config(args, "bench", nu=_shift(args, params), reps=args.reps, methods=methods)
    _emit(report_csv(bench_study(cfg)), args.out)
    return 0


def _ingest(args) -> Dataset:
    factors = [f.strip() for f in args.factors.split(",") if f.strip()]
    columns = [c.strip() for c in args.columns.split(",")] if args.columns else None
    return csv_ingest(args.csv, args.response, factors, columns)


def cmd_ingest_check(args) -> int:
    data = _ingest(args)
    y = data.responses
    out = {
        "n": data.n,
        "response": data.response_name,
        "columns": list(data.names),
        "response_mean": float(np.mean(y)),
        "response_zero_fraction": float(np.mean(y == 0)),
        "response_max": int(np.max(y)),
    }
    sys.stdout.write(_json(out))
    return 0


def cmd_regress(args) -> int:
    from .counts import make_rng

    data = _ingest(args)
    spec = RegressionSpec(args.family, args.zero_link)
    fit = fit_regression(spec, data)
    method = args.method.replace("-", "_")
    grid = parse_grid(args.M_grid)
    per_M, rows = [], []
    for mi, M in enumerate(grid):
        rng = make_rng(args.seed, mi) if method == "monte_carlo" else None
        F = regression_fim(spec, fit, data, M, method, rng)
        ci = wald_ci(fit.theta, F, data.n, args.level)
        inv = invert(F)
        signif = [bool(lo > 0 or hi < 0) for _, _, lo, hi in ci.rows()]
        per_M.append({"M": M, "singular": inv.singular, "condition": inv.condition,
                      "coefficients": [{"name": lab, "estimate": est, "se": float(se), "lower": lo,
                                        "upper": hi, "excludes_zero": s}
                                       for (lab, est, lo, hi), se, s in zip(ci.rows(), ci.se, signif)]})
        rows.extend((M, lab, est, float(se), lo, hi, int(s))
                    for (lab, est, lo, hi), se, s in zip(ci.rows(), ci.se, signif))
    decisions = [[c["excludes_zero"] for c in m["coefficients"]] for m in per_M]
    summary = {
        "version": __version__,
        "family": spec.family,
        "zero_link": spec.zero_link,
        "method": method,
        "n": data.n,
        "loglik": fit.loglik,
        "aic": fit.aic,
        "bic": fit.bic,
        "converged": fit.converged,
        "grad_norm": fit.grad_norm,
        "coefficients": dict(zip(fit.labels, map(float, fit.theta))),
        "by_M": per_M,
        "significance_stable": all(d == decisions[0] for d in decisions),
    }
    if args.out:
        with open(args.csv, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        ident = {"kind": "regress", "family": spec.family, "zero_link": spec.zero_link, "method": method,
                 "M_grid": list(grid), "level": args.level, "seed": args.seed, "response": args.response,
                 "factors": args.factors, "columns": args.columns, "data_sha256": digest}
        blob = json.dumps(ident, sort_keys=True, separators=(",", ":"))
        buf = io.StringIO()
        buf.write(f"# trigfree {__version__}\r\n# study: regress\r\n# seed: {args.seed}\r\n"
                  f"# config_sha256: {hashlib.sha256(blob.encode()).hexdigest()}\r\n# config: {blob}\r\n")
        w = csv.writer(buf)
        w.writerow(("M", "coefficient", "estimate", "se", "lower", "upper", "excludes_zero"))
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        _emit(buf.getvalue(), args.out)
    _emit(_json(summary), args.json)
    return 0 if fit.converged else EXIT_NONCONVERGED


_COMMANDS = {
    "expect": cmd_expect,
    "compare": cmd_compare,
    "sensitivity": cmd_sensitivity,
    "fim-sim": cmd_fim_sim,
    "bench": cmd_bench,
    "regress": cmd_regress,
    "ingest-check": cmd_ingest_check,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.cmd](args)
    except (_Usage, DataError) as exc:
        sys.stderr.write(f"trigfree: {exc}\n")
        return EXIT_USAGE
    except (DomainError, ResourceLimitError) as exc:
        sys.stderr.write(f"trigfree: {exc}\n")
        return EXIT_DOMAIN
    except ValueError as exc:
        sys.stderr.write(f"trigfree: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
