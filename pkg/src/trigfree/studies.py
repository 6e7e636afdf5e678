"""Seeded study drivers behind the command line.

Every stochastic quantity is drawn from ``make_rng(seed, replicate, ...)``
so a replicate's numbers do not depend on which worker ran it; results are
gathered in replicate order.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import __version__
from .counts import BetaBinomial, Binomial, CountModel, make_rng
from .expect import (
    M_REF,
    gfwl_tail_error,
    psi1_expect,
    psi1_monte_carlo,
    psi1_trigamma_free,
    rho_star,
    tail_error,
)
from .fisher import (
    fim_family,
    frobenius_distance,
    invert,
    max_ci_length_change,
    wald_ci,
)
from .infer import FAMILIES, fit_probabilistic, link_invert, model_for
from .specfun import DomainError, count_trigamma

__all__ = [
    "SimulationReport",
    "StudyConfig",
    "bench_study",
    "build_model",
    "compare_study",
    "config_hash",
    "default_workers",
    "fim_sim_study",
    "pmap",
    "sensitivity_study",
    "simulate_regression",
]

DEFAULT_GRID = tuple(range(10, 201, 10))
WORKERS_ENV = "TRIGFREE_WORKERS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def pmap(fn, items, workers: int = 1):
    """Ordered map, in-process for one worker and over processes otherwise."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


@dataclass
class StudyConfig:
    kind: str
    family: str
    params: dict
    M_grid: tuple = DEFAULT_GRID
    B: int = 200
    N: int = 1000
    seed: int | None = None
    workers: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.B < 1 or self.N < 1:
            raise ValueError("B and N must be at least 1")
        grid = tuple(int(m) for m in self.M_grid)
        if any(b <= a for a, b in itertools.pairwise(grid)):
            raise ValueError("M grid must be strictly increasing")
        self.M_grid = grid

    def identity(self) -> dict:
        """Everything that determines the output (worker count excluded)."""
        return {
            "kind": self.kind,
            "family": self.family,
            "params": {k: self.params[k] for k in sorted(self.params)},
            "M_grid": list(self.M_grid),
            "B": self.B,
            "N": self.N,
            "seed": self.seed,
            "extra": {k: self.extra[k] for k in sorted(self.extra)},
        }


def config_hash(config: StudyConfig) -> str:
    blob = json.dumps(config.identity(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class SimulationReport:
    config: StudyConfig
    columns: tuple
    rows: list
    aggregate_columns: tuple = ()
    aggregates: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def header_lines(self) -> list[str]:
        c = self.config
        lines = [
            f"# trigfree {__version__}",
            f"# study: {c.kind}",
            f"# seed: {c.seed}",
            f"# config_sha256: {config_hash(c)}",
            "# config: " + json.dumps(c.identity(), sort_keys=True, separators=(",", ":")),
        ]
        for k in sorted(self.meta):
            lines.append(f"# {k}: {json.dumps(self.meta[k], sort_keys=True)}")
        return lines


# ---------------------------------------------------------------- models

def build_model(family: str, params: dict) -> CountModel:
    """Model for a family name used on the command line."""
    if family in FAMILIES:
        return model_for(family, params)
    if family == "binom":
        return Binomial(int(params["n"]), params["p"])
    if family == "betabinom":
        return BetaBinomial(int(params["n"]), params["alpha"], params["beta"])
    raise ValueError(f"unknown family {family!r}")


def _ln_abs(x: float) -> float:
    return math.log(abs(x)) if x != 0 else -math.inf


# ---------------------------------------------------------------- compare

def _mc_errors(args, nu, model, M, reference, seed):
    rep, mi = args
    rng = make_rng(seed, rep, mi)
    return psi1_monte_carlo(nu, model, M, rng).value - reference


def _mc_median(nu, model, M, mi, reference, seed, B, workers):
    fn = partial(_mc_errors, nu=nu, model=model, M=M, reference=reference, seed=seed)
    errs = pmap(fn, [(r, mi) for r in range(B)], workers)
    return float(np.median(np.abs(errs)))


def deterministic_errors(nu: float, model: CountModel, M: int, M_ref: int = M_REF, table=None):
    """Signed tail-form errors (estimate - reference) of the three series methods."""
    if table is None:
        table = model.tail_table(M_ref)
    if M >= M_ref:
        return {"trigamma_free": 0.0, "calibrated": 0.0, "gfwl": 0.0}
    e1 = tail_error(nu, model, M, M_ref, table)
    bound = table.sf(M + 1) / (nu + M)
    eg = gfwl_tail_error(nu, model, M, M_ref, table)
    return {"trigamma_free": e1, "calibrated": e1 - rho_star(nu, M) * bound, "gfwl": eg}


def compare_study(config: StudyConfig) -> SimulationReport:
    """Log absolute errors of every estimator on an M grid."""
    nu = float(config.extra.get("nu", config.params.get("nu", 1.0)))
    M_ref = int(config.extra.get("M_ref", M_REF))
    model = build_model(config.family, config.params)
    table = model.tail_table(M_ref)
    reference = psi1_trigamma_free(nu, model, M_ref, table).value
    mean = model.mean()
    rows = []
    for mi, M in enumerate(config.M_grid):
        det = deterministic_errors(nu, model, M, M_ref, table)
        mc = None
        if config.seed is not None:
            mc = _ln_abs(_mc_median(nu, model, M, mi, reference, config.seed, config.B, config.workers))
        for method in ("trigamma_free", "calibrated", "gfwl"):
            rows.append((config.family, nu, config.params.get("p"), M, method, _ln_abs(det[method]), mc))
        if mc is not None:
            rows.append((config.family, nu, config.params.get("p"), M, "monte_carlo", mc, mc))
    meta = {"reference": reference, "M_ref": M_ref}
    if math.isfinite(mean):
        meta["markers"] = {"half_mean": mean / 2, "mean": mean, "twice_mean": 2 * mean}
    cols = ("family", "nu", "p", "M", "method", "ln_abs_error", "mc_median_ln_abs_error")
    return SimulationReport(config, cols, rows, meta=meta)


# ---------------------------------------------------------------- sensitivity

def _sens_rep(rep, config, M_ref):
    fam, truth = config.family, config.params
    rng = make_rng(config.seed, rep)
    y = model_for(fam, truth).sample(rng, config.N)
    fit = fit_probabilistic(fam, y)
    nu = fit.params["nu"]
    model = model_for(fam, fit.params)
    table = model.tail_table(M_ref)
    ref = psi1_trigamma_free(nu, model, M_ref, table).value
    out = []
    for mi, M in enumerate(config.M_grid):
        det = deterministic_errors(nu, model, M, M_ref, table)
        mc = psi1_monte_carlo(nu, model, M, make_rng(config.seed, rep, 1 + mi)).value - ref
        out.append((abs(det["trigamma_free"]), abs(det["calibrated"]), abs(det["gfwl"]), abs(mc)))
    return fit.converged, [fit.params[k] for k in fit.labels], out


def sensitivity_study(config: StudyConfig) -> SimulationReport:
    """Estimator errors evaluated at parameters fitted to simulated data."""
    if config.seed is None:
        raise ValueError("sensitivity study needs a seed")
    M_ref = int(config.extra.get("M_ref", M_REF))
    res = pmap(partial(_sens_rep, config=config, M_ref=M_ref), range(config.B), config.workers)
    ok = [r for r in res if r[0]]
    methods = ("trigamma_free", "calibrated", "gfwl", "monte_carlo")
    rows = []
    for mi, M in enumerate(config.M_grid):
        for k, method in enumerate(methods):
            e = np.array([r[2][mi][k] for r in ok])
            rows.append((M, method, float(np.median(e)), float(np.quantile(e, 0.95))))
    est = np.array([r[1] for r in ok])
    labels = FAMILIES[config.family]
    meta = {
        "replicates": config.B,
        "non_converged": config.B - len(ok),
        "estimate_quantiles": {lab: [float(np.quantile(est[:, j], 0.025)),
                                     float(np.quantile(est[:, j], 0.975))]
                               for j, lab in enumerate(labels)},
    }
    return SimulationReport(config, ("M", "method", "median_abs_error", "q95_abs_error"), rows, meta=meta)


# ---------------------------------------------------------------- FIM simulation

FIM_METHODS = ("trigamma_free", "calibrated", "gfwl", "monte_carlo")


def _fim_rep(rep, config, methods, M_ref, level):
    fam, truth = config.family, config.params
    labels = FAMILIES[fam]
    rng = make_rng(config.seed, rep)
    y = model_for(fam, truth).sample(rng, config.N)
    try:
        fit = fit_probabilistic(fam, y)
    except (DomainError, ValueError, ArithmeticError) as exc:  # degenerate sample
        return {"rep": rep, "converged": False, "error": str(exc), "rows": []}
    est = np.array([fit.params[k] for k in labels])
    true = np.array([truth[k] for k in labels])
    ref = fim_family(fam, fit.params, M_ref, "trigamma_free")
    ref_inv = invert(ref)
    rows = []
    for k, method in enumerate(methods):
        for mi, M in enumerate(config.M_grid):
            sub = make_rng(config.seed, rep, 1 + k, mi) if method == "monte_carlo" else None
            F = fim_family(fam, fit.params, M, method, sub)
            inv = invert(F)
            ci = wald_ci(est, F, config.N, level)
            rows.append((rep, method, M, frobenius_distance(inv.matrix, ref_inv.matrix),
                         max_ci_length_change(inv, ref_inv), *map(int, ci.contains(true))))
    return {"rep": rep, "converged": bool(fit.converged), "error": "", "rows": rows,
            "estimates": est.tolist()}


def fim_sim_study(config: StudyConfig) -> SimulationReport:
    """Simulate, fit, build information matrices per method and M, compare
    with the reference matrix and record Wald interval coverage."""
    if config.seed is None:
        raise ValueError("fim-sim needs a seed")
    methods = tuple(config.extra.get("methods", FIM_METHODS))
    M_ref = int(config.extra.get("M_ref", M_REF))
    level = float(config.extra.get("level", 0.95))
    fn = partial(_fim_rep, config=config, methods=methods, M_ref=M_ref, level=level)
    res = pmap(fn, range(config.B), config.workers)
    labels = FAMILIES[config.family]
    cols = ("rep", "method", "M", "frobenius", "max_ci_length_change") + tuple(f"hit_{k}" for k in labels)
    rows = []
    good = [r for r in res if r["converged"]]
    bad = [r["rep"] for r in res if not r["converged"]]
    for r in good:
        rows.extend(r["rows"])
    agg = []
    for method in methods:
        for M in config.M_grid:
            sel = [row for row in rows if row[1] == method and row[2] == M]
            if not sel:
                continue
            a = np.array([row[3:] for row in sel], dtype=float)
            agg.append((method, M, len(sel), float(np.mean(a[:, 0])), float(np.mean(a[:, 1])),
                        *[float(np.mean(a[:, 2 + j])) for j in range(len(labels))]))
    agg_cols = ("method", "M", "replicates", "mean_frobenius", "mean_max_ci_length_change") + tuple(
        f"coverage_{k}" for k in labels)
    meta = {"non_converged": len(bad), "non_converged_reps": bad, "M_ref": M_ref, "level": level}
    return SimulationReport(config, cols, rows, agg_cols, agg, meta)


# ---------------------------------------------------------------- bench

def bench_study(config: StudyConfig) -> SimulationReport:
    """Wall-clock means and exact trigamma evaluation counts per method and M."""
    nu = float(config.extra.get("nu", config.params.get("nu", 1.0)))
    reps = int(config.extra.get("reps", 3))
    methods = tuple(config.extra.get("methods", ("trigamma_free", "calibrated", "gfwl")))
    model = build_model(config.family, config.params)
    rows = []
    for mi, M in enumerate(config.M_grid):
        for method in methods:
            times, evals = [], set()
            for r in range(reps):
                rng = make_rng(config.seed or 0, mi, r) if method == "monte_carlo" else None
                with count_trigamma() as calls:
                    t0 = time.perf_counter()
                    psi1_expect(nu, model, M, method, rng)
                    times.append(time.perf_counter() - t0)
                evals.add(calls())
            rows.append((method, config.family, M, float(np.mean(times)), max(evals)))
    return SimulationReport(config, ("method", "family", "M", "mean_seconds", "trigamma_evals"), rows,
                            meta={"reps": reps, "nu": nu})


# ---------------------------------------------------------------- regression data

def simulate_regression(spec, coefs: dict, X: np.ndarray, names, rng) -> np.ndarray:
    """Responses from a regression model with the given coefficients.

    ``coefs`` maps each parameter to its coefficient vector (intercept
    first, then one entry per predictor column of that parameter).
    """
    n = X.shape[0]
    col = {nm: X[:, j] for j, nm in enumerate(names)}
    par = {}
    for name in spec.params:
        cols = spec.columns.get(name, names) if spec.columns else names
        D = np.column_stack([np.ones(n)] + [col[c] for c in cols])
        par[name] = link_invert(spec.link(name), D @ np.asarray(coefs[name], dtype=float))
    if spec.family.endswith("bnb"):
        lam = rng.beta(par["alpha"], par["beta"])
        lam = np.maximum(lam, np.finfo(float).tiny)
        rate = rng.gamma(par["nu"]) * (1.0 - lam) / lam
    else:
        rate = rng.gamma(par["nu"], (1.0 - par["p"]) / par["p"])
    base = rng.poisson(rate)
    if spec.family.startswith("zi"):
        return np.where(rng.random(n) < par["phi"], 0, base)
    if spec.family.startswith("za"):
        zero = rng.random(n) < par["phi"]
        out = base.copy()
        need = (~zero) & (out == 0)
        while need.any():
            if spec.family.endswith("bnb"):
                lam = np.maximum(rng.beta(par["alpha"][need], par["beta"][need]), np.finfo(float).tiny)
                r = rng.gamma(par["nu"][need]) * (1.0 - lam) / lam
            else:
                r = rng.gamma(par["nu"][need], (1.0 - par["p"][need]) / par["p"][need])
            out[need] = rng.poisson(r)
            need = (~zero) & (out == 0)
        return np.where(zero, 0, out)
    return base
