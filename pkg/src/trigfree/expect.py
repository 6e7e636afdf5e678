"""Estimators of E[psi1(nu + Y)] and E[psi(nu + Y)] for count variables Y.

The trigamma-free estimator rewrites the expectation as a series in the
survival function,

    E psi1(nu + Y) = psi1(nu) - sum_{y >= 0} P(Y > y) / (nu + y)^2,

truncated at M, so it needs one trigamma evaluation.  The dropped tail is
non-negative and at most P(Y > M+1) / (nu + M).  The calibrated variant
subtracts a fixed fraction of that bound.
"""
from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .counts import DEFAULT_CAP, CountModel, ResourceLimitError, TailTable
from .specfun import DomainError, digamma, trigamma

__all__ = [
    "METHODS",
    "M_REF",
    "ExpectationResult",
    "choose_M",
    "gfwl_tail_error",
    "psi1_calibrated",
    "psi1_exact_finite",
    "psi1_expect",
    "psi1_gfwl",
    "psi1_many",
    "psi1_monte_carlo",
    "psi1_trigamma_free",
    "psi_digamma_expect",
    "resolve_M",
    "rho_star",
    "sandwich_bounds",
    "tail_error",
    "truncation_bound",
    "worst_case_factor",
]

METHODS = ("trigamma_free", "calibrated", "gfwl", "monte_carlo", "exact_finite")
M_REF = 10**6


@dataclass(frozen=True)
class ExpectationResult:
    value: float
    method: str
    M: int
    bound: float | None
    trigamma_evals: int
    rigorous: bool = True

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "method": self.method,
            "M": self.M,
            "bound": self.bound,
            "bound_rigorous": self.rigorous,
            "trigamma_evals": self.trigamma_evals,
        }


def _check_nu(nu) -> float:
    nu = float(nu)
    if not (nu > 0 and math.isfinite(nu)):
        raise DomainError(f"nu must be positive and finite, got {nu!r}")
    return nu


def _table(model: CountModel, M: int, table: TailTable | None) -> TailTable:
    if int(M) < 0:
        raise DomainError(f"M must be non-negative, got {M}")
    if table is not None and table.M >= M:
        if table.M == M:
            return table
        return TailTable(M=M, pmf=table.pmf[: M + 1], survival=table.survival[: M + 2],
                         tail=table.sf(M + 1))
    return model.tail_table(M)


def _series(nu: float, table: TailTable, power: int) -> np.ndarray:
    d = nu + np.arange(table.M + 1, dtype=float)
    s = table.survival[1:]
    return s / (d * d) if power == 2 else s / d


def rho_star(nu: float, M: int) -> float:
    """Calibration weight minimising the worst-case error factor."""
    a = nu + M
    return 0.5 + a / (2.0 * (a + 1.0) * (a + 2.0))


def worst_case_factor(rho: float, nu: float, M: int) -> float:
    """U(rho) = max(|1 - rho|, |rho - (nu+M)/((nu+M+1)(nu+M+2))|)."""
    a = nu + M
    return max(abs(1.0 - rho), abs(rho - a / ((a + 1.0) * (a + 2.0))))


def truncation_bound(nu: float, model: CountModel, M: int, table: TailTable | None = None) -> float:
    """Upper bound P(Y > M+1) / (nu + M) on the trigamma-free truncation error."""
    nu = _check_nu(nu)
    tail = table.sf(M + 1) if table is not None and table.M >= M else model.sf(M + 1)
    return tail / (nu + M)


def psi1_trigamma_free(nu, model: CountModel, M: int, table: TailTable | None = None):
    """psi1(nu) - sum_{y=0}^{M} P(Y > y) / (nu + y)^2.

    The sum is exactly rounded, so once the remaining terms are negligible
    the result does not change with M at all.
    """
    nu = _check_nu(nu)
    t = _table(model, M, table)
    head = trigamma(nu)
    value = math.fsum(np.concatenate(([head], -_series(nu, t, 2))))
    return ExpectationResult(value, "trigamma_free", t.M, t.tail / (nu + t.M), 1)


def psi1_calibrated(nu, model: CountModel, M: int, table: TailTable | None = None):
    """Trigamma-free value minus rho* times the truncation bound."""
    nu = _check_nu(nu)
    t = _table(model, M, table)
    rho = rho_star(nu, t.M)
    bound = t.tail / (nu + t.M)
    head = trigamma(nu)
    value = math.fsum(np.concatenate(([head, -rho * bound], -_series(nu, t, 2))))
    return ExpectationResult(value, "calibrated", t.M, worst_case_factor(rho, nu, t.M) * bound, 1)


def psi1_gfwl(nu, model: CountModel, M: int, table: TailTable | None = None):
    """sum_{k<=M} psi1(k + nu) P(Y=k) + psi1(M + 1 + nu) P(Y > M) / 2."""
    nu = _check_nu(nu)
    t = _table(model, M, table)
    vals = trigamma(nu + np.arange(t.M + 2, dtype=float))
    half = 0.5 * vals[-1] * t.survival[t.M + 1]
    value = math.fsum(np.append(vals[:-1] * t.pmf, half))
    return ExpectationResult(value, "gfwl", t.M, half, t.M + 2)


def psi1_monte_carlo(nu, model: CountModel, M: int, rng: np.random.Generator):
    """Mean of psi1(nu + Y_i) over M independent draws."""
    nu = _check_nu(nu)
    M = int(M)
    if M < 1:
        raise DomainError("Monte Carlo needs M >= 1")
    y = np.asarray(model.sample(rng, M), dtype=float)
    value = math.fsum(trigamma(nu + y)) / M
    return ExpectationResult(value, "monte_carlo", M, None, M, rigorous=False)


def psi1_exact_finite(nu, model: CountModel):
    """Exact expectation for a model with finite support {0, ..., n}."""
    n = model.support_max
    if n is None:
        raise DomainError("exact formula needs a finite-support model")
    nu = _check_nu(nu)
    if n == 0:
        return ExpectationResult(trigamma(nu), "exact_finite", 0, 0.0, 1)
    r = psi1_trigamma_free(nu, model, n - 1)
    return ExpectationResult(r.value, "exact_finite", n - 1, 0.0, 1)


def psi1_expect(nu, model: CountModel, M: int, method: str = "trigamma_free",
                rng: np.random.Generator | None = None, table: TailTable | None = None):
    """Dispatch on method name (see ``METHODS``)."""
    method = method.replace("-", "_")
    if method == "trigamma_free":
        return psi1_trigamma_free(nu, model, M, table)
    if method == "calibrated":
        return psi1_calibrated(nu, model, M, table)
    if method == "gfwl":
        return psi1_gfwl(nu, model, M, table)
    if method == "monte_carlo":
        if rng is None:
            raise DomainError("Monte Carlo needs a random generator")
        return psi1_monte_carlo(nu, model, M, rng)
    if method == "exact_finite":
        return psi1_exact_finite(nu, model)
    raise DomainError(f"unknown method {method!r}")


def psi1_many(shifts: Sequence[float], model: CountModel, M: int, method: str = "trigamma_free",
              rng: np.random.Generator | None = None) -> list[ExpectationResult]:
    """E psi1(s + Y) for several shifts s, sharing one table (or one sample)."""
    method = method.replace("-", "_")
    if method == "monte_carlo":
        if rng is None:
            raise DomainError("Monte Carlo needs a random generator")
        y = np.asarray(model.sample(rng, int(M)), dtype=float)
        out = []
        for s in shifts:
            s = _check_nu(s)
            out.append(ExpectationResult(math.fsum(trigamma(s + y)) / len(y), "monte_carlo",
                                         int(M), None, len(y), rigorous=False))
        return out
    if method == "exact_finite":
        return [psi1_exact_finite(s, model) for s in shifts]
    table = model.tail_table(M)
    return [psi1_expect(s, model, M, method, table=table) for s in shifts]


def psi_digamma_expect(nu, model: CountModel, M: int, table: TailTable | None = None,
                       M_ref: int = M_REF):
    """psi(nu) + sum_{y=0}^{M} P(Y > y) / (nu + y).

    No rigorous bound is known for the dropped tail; the reported bound is
    the heuristic P(Y > M+1) * log((nu + M_ref) / (nu + M)), flagged as
    non-rigorous.  For finite support and M >= n-1 the value is exact.
    """
    nu = _check_nu(nu)
    t = _table(model, M, table)
    value = math.fsum(np.concatenate(([digamma(nu)], _series(nu, t, 1))))
    if t.tail == 0.0:
        return ExpectationResult(value, "trigamma_free", t.M, 0.0, 0)
    bound = t.tail * math.log((nu + max(M_ref, t.M + 1)) / (nu + t.M))
    return ExpectationResult(value, "trigamma_free", t.M, bound, 0, rigorous=False)


def sandwich_bounds(nu, model: CountModel, M: int, M_ref: int) -> tuple[float, float]:
    """Lower and upper bounds on the dropped tail sum_{y>M} P(Y>y)/(nu+y)^2.

    The infinite sums over k >= M+2 are cut at ``M_ref``.
    """
    nu = _check_nu(nu)
    t = model.tail_table(M_ref)
    s = t.tail if M + 1 > t.M else t.sf(M + 1)
    k = np.arange(M + 2, t.M + 1, dtype=float)
    pk = t.pmf[M + 2:]
    lower = s / (nu + M + 1) - math.fsum(pk / (nu + k))
    upper = s / (nu + M) - math.fsum(pk / (nu + k - 1.0))
    return lower, upper


def tail_error(nu, model: CountModel, M: int, M_ref: int = M_REF,
               table: TailTable | None = None) -> float:
    """sum_{y=M+1}^{M_ref} P(Y > y) / (nu + y)^2, built from tail terms only."""
    nu = _check_nu(nu)
    if M_ref <= M:
        raise DomainError("M_ref must exceed M")
    t = _table(model, M_ref, table)
    y = np.arange(M + 1, M_ref + 1, dtype=float)
    d = nu + y
    return math.fsum(t.survival[M + 2:] / (d * d))


def gfwl_tail_error(nu, model: CountModel, M: int, M_ref: int = M_REF,
                    table: TailTable | None = None) -> float:
    """psi1(M+1+nu) P(Y>M) / 2 - sum_{k=M+1}^{M_ref} psi1(k+nu) P(Y=k)."""
    nu = _check_nu(nu)
    if M_ref <= M:
        raise DomainError("M_ref must exceed M")
    t = _table(model, M_ref, table)
    k = np.arange(M + 1, M_ref + 1, dtype=float)
    pk = t.pmf[M + 1:]
    live = pk > 0
    terms = np.zeros_like(pk)
    if live.any():
        terms[live] = trigamma(nu + k[live]) * pk[live]
    half = 0.5 * trigamma(M + 1 + nu) * t.survival[M + 1]
    return math.fsum(np.append(-terms, half))


# ---------------------------------------------------------------- truncation point

def _ceil_tol(v: float) -> int:
    # ceiling that ignores floating noise just above an integer
    return math.ceil(v - 1e-9 * max(1.0, abs(v)))


def _smallest_M(pred, cap: int) -> int:
    if pred(0):
        return 0
    hi = 1
    while not pred(hi):
        if hi >= cap:
            raise ResourceLimitError(f"tolerance not met for any M <= {cap}")
        hi = min(2 * hi, cap)
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def choose_M(nu, model: CountModel, policy: str = "default", tolerance: float | None = None,
             cap: int = DEFAULT_CAP) -> int:
    """Truncation point.

    ``policy="default"`` gives ceil(2 E Y) + 1 (falling back to a 1e-12
    tolerance if the mean is infinite); ``policy="tolerance"`` gives the
    smallest M whose truncation bound is at most ``tolerance``.
    """
    nu = _check_nu(nu)
    if policy == "default":
        m = model.mean()
        if math.isfinite(m):
            M = _ceil_tol(2.0 * m) + 1
            if M > cap:
                raise ResourceLimitError(f"M={M} exceeds cap {cap}")
            return M
        policy, tolerance = "tolerance", 1e-12
    if policy != "tolerance" or tolerance is None or tolerance < 0:
        raise DomainError(f"bad truncation policy {policy!r} / tolerance {tolerance!r}")
    n = model.support_max
    if n is not None:
        cap = min(cap, max(n - 1, 0))
    return _smallest_M(lambda M: model.sf(M + 1) / (nu + M) <= tolerance, cap)


def resolve_M(nu, model: CountModel, M_policy) -> int:
    """Turn an M specification into an integer.

    Accepts an int, ``"default"``, ``"tol:<t>"`` or ``("tolerance", t)``.
    """
    if isinstance(M_policy, (int, np.integer)):
        return int(M_policy)
    if isinstance(M_policy, tuple):
        kind, t = M_policy
        return choose_M(nu, model, kind, float(t))
    s = str(M_policy).strip()
    s = s.removeprefix("policy:")
    if s == "default":
        return choose_M(nu, model)
    if s.startswith(("tol:", "tolerance:")):
        return choose_M(nu, model, "tolerance", float(s.split(":", 1)[1]))
    try:
        return int(s)
    except ValueError:
        raise DomainError(f"unrecognised M policy {M_policy!r}") from None
