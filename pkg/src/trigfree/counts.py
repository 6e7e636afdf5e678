"""Count distributions: pmf, survival P(Y > y), mean and seeded sampling.

Survival tables are built in fixed blocks of ``BLOCK`` consecutive values.
Inside a block the pmf comes from the forward ratio recurrence (carried in
extended precision across blocks) and the survival values from a reverse
cumulative sum seeded at the block's last value.  Seeds near the head of
the distribution are ``1 - sum(pmf)``; further out they come from a closed
form for the tail, so tiny survivals are never formed by cancellation.
Because blocks are aligned and always computed whole, every table entry is
bit-identical no matter how long the table is.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, special

from .specfun import DomainError, log_beta, log_gamma

__all__ = [
    "BLOCK",
    "DEFAULT_CAP",
    "BetaBinomial",
    "BetaNegBinomial",
    "Binomial",
    "CountModel",
    "Hurdle",
    "NegBinomial",
    "ResourceLimitError",
    "TailTable",
    "ZeroInflated",
    "make_rng",
    "mean",
    "pmf",
    "sample",
    "survival",
    "tail_table",
]

BLOCK = 4096
HEAD_THRESHOLD = 0.05
DEFAULT_CAP = 10**8
_LD = np.longdouble


class ResourceLimitError(RuntimeError):
    """Requested truncation point exceeds the configured cap."""


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based Philox stream for ``seed`` and an optional key path.

    ``make_rng(s, r)`` for replicate ``r`` is independent of every other
    replicate and of the order in which replicates are run.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class TailTable:
    """pmf[y] = P(Y = y) for y = 0..M and survival[i] = P(Y >= i) for i = 0..M+1.

    ``tail`` holds P(Y > M+1), the quantity entering the truncation bound.
    """

    M: int
    pmf: np.ndarray
    survival: np.ndarray
    tail: float
    block: int = BLOCK
    head_threshold: float = HEAD_THRESHOLD

    def sf(self, y: int) -> float:
        """P(Y > y) for -1 <= y <= M+1."""
        if y < -1 or y > self.M + 1:
            raise IndexError(f"y={y} outside table range [-1, {self.M + 1}]")
        if y == self.M + 1:
            return self.tail
        return float(self.survival[y + 1])

    @property
    def exceed(self) -> np.ndarray:
        """P(Y > y) for y = 0..M+1."""
        return np.append(self.survival[1:], self.tail)


# ---------------------------------------------------------------- base class

class CountModel:
    """Non-negative integer distribution.

    Subclasses provide ``logpmf``, ``sf``, ``mean``, ``sample`` and a way of
    filling survival tables.
    """

    support_max: int | None = None

    def logpmf(self, y):
        raise NotImplementedError

    def pmf(self, y):
        y = _check_y(y)
        return np.exp(self.logpmf(y))

    def sf(self, y) -> float:
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        raise NotImplementedError

    def _arrays(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """pmf[0..n-1] and P(Y > y) for y = 0..n-1 (n at least as requested)."""
        raise NotImplementedError

    def tail_table(self, M: int, cap: int = DEFAULT_CAP) -> TailTable:
        M = int(M)
        if M < 0:
            raise DomainError(f"M must be non-negative, got {M}")
        if M > cap:
            raise ResourceLimitError(f"M={M} exceeds cap {cap}")
        p, s = self._arrays(M + 2)
        surv = np.empty(M + 2)
        surv[0] = 1.0
        surv[1:] = s[: M + 1]
        return TailTable(M=M, pmf=p[: M + 1].copy(), survival=surv, tail=float(s[M + 1]))

    @property
    def p0(self) -> float:
        return float(np.exp(self.logpmf(0)))


def _check_y(y):
    a = np.asarray(y)
    if np.any(a < 0):
        raise DomainError("counts must be non-negative")
    return a


def _positive(name, v):
    v = float(v)
    if not (v > 0 and math.isfinite(v)):
        raise DomainError(f"{name} must be positive and finite, got {v!r}")
    return v


def _unit(name, v):
    v = float(v)
    if not 0.0 < v < 1.0:
        raise DomainError(f"{name} must lie in (0, 1), got {v!r}")
    return v


def _log_nb_coef(nu: float, y):
    # ln[Gamma(nu+y) / (Gamma(y+1) Gamma(nu))] = -ln(nu+y) - ln B(nu, y+1)
    return -np.log(nu + y) - log_beta(nu, y + 1.0)


def _reverse_survival(pm: np.ndarray, seed: float) -> np.ndarray:
    # S[j] = seed + sum_{k>j} pm[k], accumulated from the block end
    tmp = np.empty_like(pm)
    tmp[0] = seed
    tmp[1:] = pm[:0:-1]
    return np.cumsum(tmp)[::-1]


class _InfiniteSupport(CountModel):
    """Shared block machinery for NB and BNB."""

    def _logpmf0(self) -> np.longdouble:
        raise NotImplementedError

    def _log_ratio(self, y: np.ndarray) -> np.ndarray:
        """log pmf(y+1) - log pmf(y) in extended precision."""
        raise NotImplementedError

    def _closed_sf(self, ys: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _arrays(self, n):
        nblocks = -(-n // BLOCK)
        pmf_out = np.zeros(nblocks * BLOCK)
        sf_out = np.zeros(nblocks * BLOCK)
        start = self._logpmf0()
        prefix = []
        head = True
        for b in range(nblocks):
            ys = np.arange(b * BLOCK, (b + 1) * BLOCK, dtype=_LD)
            lr = self._log_ratio(ys)
            lp = np.empty(BLOCK, dtype=_LD)
            lp[0] = start
            csum = np.cumsum(lr)
            lp[1:] = start + csum[:-1]
            start = start + csum[-1]
            pm = np.exp(lp).astype(float)
            if head:
                prefix.append(math.fsum(pm))
                rest = 1.0 - math.fsum(prefix)
                head = rest > HEAD_THRESHOLD
            if head:
                seed = rest
            else:
                seed = float(self._closed_sf(np.array([float(ys[-1])]))[0])
            sl = slice(b * BLOCK, (b + 1) * BLOCK)
            pmf_out[sl] = pm
            sf_out[sl] = _reverse_survival(pm, seed)
            if seed == 0.0 and not head:
                # everything further out is below the smallest subnormal
                break
        return pmf_out, sf_out


# ---------------------------------------------------------------- NB

@dataclass(frozen=True)
class NegBinomial(_InfiniteSupport):
    """NB(nu, p): pmf Gamma(nu+y) / (Gamma(y+1) Gamma(nu)) p^nu (1-p)^y."""

    nu: float
    p: float

    def __post_init__(self):
        object.__setattr__(self, "nu", _positive("nu", self.nu))
        object.__setattr__(self, "p", _unit("p", self.p))

    def logpmf(self, y):
        y = _check_y(y)
        yf = np.asarray(y, dtype=float)
        return (_log_nb_coef(self.nu, yf)
                + self.nu * math.log(self.p) + yf * math.log1p(-self.p))

    def sf(self, y) -> float:
        y = int(y)
        if y < 0:
            return 1.0
        return float(self._closed_sf(np.array([float(y)]))[0])

    def _closed_sf(self, ys):
        # P(Y > y) = I_{1-p}(y+1, nu), taken as the complement at p to keep p exact
        return special.betaincc(self.nu, ys + 1.0, self.p)

    def _logpmf0(self):
        return _LD(self.nu) * np.log(_LD(self.p))

    def _log_ratio(self, y):
        return np.log1p((_LD(self.nu) - 1) / (y + 1)) + np.log1p(-_LD(self.p))

    def mean(self) -> float:
        return self.nu * (1.0 - self.p) / self.p

    def sample(self, rng, count):
        lam = rng.gamma(self.nu, (1.0 - self.p) / self.p, size=int(count))
        return _poisson(rng, lam)


def _poisson(rng, lam):
    lam = np.asarray(lam, dtype=float)
    big = lam > 1e15
    if not big.any():
        return rng.poisson(lam)
    out = np.empty(lam.shape, dtype=np.int64)
    out[~big] = rng.poisson(lam[~big])
    lb = lam[big]
    draw = np.rint(lb + np.sqrt(lb) * rng.standard_normal(lb.size))
    out[big] = np.minimum(draw, 2.0**62).astype(np.int64)
    return out


# ---------------------------------------------------------------- BNB

@dataclass(frozen=True)
class BetaNegBinomial(_InfiniteSupport):
    """Beta negative binomial: NB(nu, lambda) with lambda ~ Beta(alpha, beta)."""

    nu: float
    alpha: float
    beta: float

    def __post_init__(self):
        for k in ("nu", "alpha", "beta"):
            object.__setattr__(self, k, _positive(k, getattr(self, k)))

    def logpmf(self, y):
        y = _check_y(y)
        yf = np.asarray(y, dtype=float)
        return (_log_nb_coef(self.nu, yf)
                + log_beta(self.nu + self.alpha, yf + self.beta)
                - log_beta(self.alpha, self.beta))

    def _logpmf0(self):
        return _LD(log_beta(self.nu + self.alpha, self.beta)) - _LD(log_beta(self.alpha, self.beta))

    def _log_ratio(self, y):
        nu, a, b = _LD(self.nu), _LD(self.alpha), _LD(self.beta)
        return np.log1p((nu - 1) / (y + 1)) + np.log1p(-(nu + a) / (nu + a + b + y))

    def sf(self, y) -> float:
        y = int(y)
        if y < 0:
            return 1.0
        if y < BLOCK:
            rest = 1.0 - math.fsum(self.pmf(np.arange(y + 1)))
            if rest > HEAD_THRESHOLD:
                return rest
            # the quadrature is poorly conditioned at small y; the first
            # table block is seeded at its far end and summed back instead
            return float(self._arrays(y + 1)[1][y])
        return self._sf_quad(y)

    def _closed_sf(self, ys):
        return np.array([self._sf_quad(int(y)) for y in ys])

    @cached_property
    def _log_norm(self) -> float:
        return log_beta(self.alpha, self.beta)

    def _sf_quad(self, y: int) -> float:
        """P(Y > y) = E[ P_NB(Y > y | lambda) ] over lambda ~ Beta(alpha, beta).

        Integrated in u = log(lambda).  Only used for y >= BLOCK.  The
        conditional tail switches off around the mean m of Beta(nu, y+1);
        breakpoints bracket that region on both a relative and a standard
        deviation scale, and below it the integrand is ~ lambda**alpha.
        """
        nu, a, b = self.nu, self.alpha, self.beta
        m = nu / (nu + y + 1.0)
        sd = math.sqrt(m * (1.0 - m) / (nu + y + 2.0))
        lo = math.log(m) - 60.0 / a
        lam = [m * c for c in (0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0)]
        lam += [m + k * sd for k in (-10, -5, -2, 2, 5, 10, 20)]
        pts = sorted({math.log(v) for v in lam if 0.0 < v < 1.0})
        pts = [u for u in pts if lo < u < 0.0]

        def f(u):
            lam = math.exp(u)
            if lam >= 1.0:
                return 0.0
            w = a * u + (b - 1.0) * math.log1p(-lam)
            return math.exp(w) * special.betaincc(nu, y + 1.0, lam)

        val, _ = integrate.quad(f, lo, 0.0, points=pts or None, epsabs=0.0,
                                epsrel=1e-13, limit=400)
        return val * math.exp(-self._log_norm)

    def mean(self) -> float:
        if self.alpha <= 1.0:
            return math.inf
        return self.nu * self.beta / (self.alpha - 1.0)

    def sample(self, rng, count):
        lam = rng.beta(self.alpha, self.beta, size=int(count))
        lam = np.maximum(lam, np.finfo(float).tiny)
        rate = rng.gamma(self.nu, 1.0, size=int(count)) * ((1.0 - lam) / lam)
        return _poisson(rng, rate)


# ---------------------------------------------------------------- finite support

class _FiniteSupport(CountModel):
    n: int

    def _finite_logpmf0(self) -> np.longdouble:
        raise NotImplementedError

    def _finite_log_ratio(self, y):
        raise NotImplementedError

    @cached_property
    def _full(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.n
        lp = np.empty(n + 1, dtype=_LD)
        lp[0] = self._finite_logpmf0()
        if n:
            lp[1:] = lp[0] + np.cumsum(self._finite_log_ratio(np.arange(n, dtype=_LD)))
        pm = np.exp(lp).astype(float)
        # the whole support is here, so divide out the rounding in the log seed
        pm /= math.fsum(pm)
        return pm, _reverse_survival(pm, 0.0)

    def _arrays(self, n):
        pm, s = self._full
        size = max(n, pm.size)
        po = np.zeros(size)
        so = np.zeros(size)
        po[: pm.size] = pm
        so[: s.size] = s
        return po, so

    def sf(self, y) -> float:
        y = int(y)
        if y < 0:
            return 1.0
        if y >= self.n:
            return 0.0
        return float(self._full[1][y])


def _count(name, v):
    if int(v) != v or v < 0:
        raise DomainError(f"{name} must be a non-negative integer, got {v!r}")
    return int(v)


@dataclass(frozen=True)
class Binomial(_FiniteSupport):
    n: int
    p: float

    def __post_init__(self):
        object.__setattr__(self, "n", _count("n", self.n))
        object.__setattr__(self, "p", _unit("p", self.p))

    @property
    def support_max(self):
        return self.n

    def logpmf(self, y):
        y = _check_y(y)
        yf = np.asarray(y, dtype=float)
        inside = yf <= self.n
        ys = np.where(inside, yf, 0.0)
        out = (log_gamma(self.n + 1.0) - log_gamma(ys + 1.0) - log_gamma(self.n - ys + 1.0)
               + ys * math.log(self.p) + (self.n - ys) * math.log1p(-self.p))
        return np.where(inside, out, -np.inf)

    def _finite_logpmf0(self):
        return _LD(self.n) * np.log1p(-_LD(self.p))

    def _finite_log_ratio(self, y):
        p = _LD(self.p)
        return np.log((self.n - y) / (y + 1)) + np.log(p) - np.log1p(-p)

    def mean(self):
        return self.n * self.p

    def sample(self, rng, count):
        return rng.binomial(self.n, self.p, size=int(count))


@dataclass(frozen=True)
class BetaBinomial(_FiniteSupport):
    n: int
    alpha: float
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "n", _count("n", self.n))
        object.__setattr__(self, "alpha", _positive("alpha", self.alpha))
        object.__setattr__(self, "beta", _positive("beta", self.beta))

    @property
    def support_max(self):
        return self.n

    def logpmf(self, y):
        y = _check_y(y)
        yf = np.asarray(y, dtype=float)
        inside = yf <= self.n
        ys = np.where(inside, yf, 0.0)
        out = (log_gamma(self.n + 1.0) - log_gamma(ys + 1.0) - log_gamma(self.n - ys + 1.0)
               + log_beta(ys + self.alpha, self.n - ys + self.beta)
               - log_beta(self.alpha, self.beta))
        return np.where(inside, out, -np.inf)

    def _finite_logpmf0(self):
        return _LD(log_beta(self.alpha, self.n + self.beta)) - _LD(log_beta(self.alpha, self.beta))

    def _finite_log_ratio(self, y):
        a, b = _LD(self.alpha), _LD(self.beta)
        return np.log((self.n - y) / (y + 1)) + np.log((y + a) / (self.n - y - 1 + b))

    def mean(self):
        return self.n * self.alpha / (self.alpha + self.beta)

    def sample(self, rng, count):
        return rng.binomial(self.n, rng.beta(self.alpha, self.beta, size=int(count)))


# ---------------------------------------------------------------- wrappers

@dataclass(frozen=True)
class ZeroInflated(CountModel):
    """phi * [Y = 0] + (1 - phi) * base."""

    phi: float
    base: CountModel

    def __post_init__(self):
        object.__setattr__(self, "phi", _unit("phi", self.phi))

    @property
    def support_max(self):
        return self.base.support_max

    def logpmf(self, y):
        y = _check_y(y)
        lb = self.base.logpmf(y)
        zero = np.logaddexp(math.log(self.phi), math.log1p(-self.phi) + lb)
        return np.where(np.asarray(y) == 0, zero, math.log1p(-self.phi) + lb)

    def sf(self, y):
        y = int(y)
        return 1.0 if y < 0 else (1.0 - self.phi) * self.base.sf(y)

    def mean(self):
        return (1.0 - self.phi) * self.base.mean()

    def _arrays(self, n):
        pm, s = self.base._arrays(n)
        pm = (1.0 - self.phi) * pm
        pm[0] += self.phi
        return pm, (1.0 - self.phi) * s

    def sample(self, rng, count):
        count = int(count)
        structural = rng.random(count) < self.phi
        y = np.asarray(self.base.sample(rng, count))
        return np.where(structural, 0, y)


@dataclass(frozen=True)
class Hurdle(CountModel):
    """phi * [Y = 0] + (1 - phi) * (base truncated to Y > 0)."""

    phi: float
    base: CountModel

    def __post_init__(self):
        object.__setattr__(self, "phi", _unit("phi", self.phi))
        if not self.base.sf(0) > 0.0:
            raise DomainError("hurdle base must put mass on positive counts")

    @property
    def support_max(self):
        return self.base.support_max

    @cached_property
    def _log_pos(self) -> float:
        return math.log(self.base.sf(0))

    def logpmf(self, y):
        y = _check_y(y)
        pos = math.log1p(-self.phi) + self.base.logpmf(y) - self._log_pos
        return np.where(np.asarray(y) == 0, math.log(self.phi), pos)

    def sf(self, y):
        y = int(y)
        if y < 0:
            return 1.0
        return (1.0 - self.phi) * self.base.sf(y) / self.base.sf(0)

    def mean(self):
        return (1.0 - self.phi) * self.base.mean() / self.base.sf(0)

    def _arrays(self, n):
        pm, s = self.base._arrays(n)
        scale = (1.0 - self.phi) / s[0]
        pm = scale * pm
        pm[0] = self.phi
        return pm, scale * s

    def sample(self, rng, count):
        count = int(count)
        zero = rng.random(count) < self.phi
        need = int((~zero).sum())
        got = []
        while need > 0:
            draw = np.asarray(self.base.sample(rng, max(need, 16)))
            draw = draw[draw > 0][:need]
            got.append(draw)
            need -= draw.size
        out = np.zeros(count, dtype=np.int64)
        if got:
            out[~zero] = np.concatenate(got)
        return out


# ---------------------------------------------------------------- functional API

def pmf(model: CountModel, y):
    """P(Y = y)."""
    return model.pmf(y)


def survival(model: CountModel, y: int) -> float:
    """P(Y > y) for integer y >= -1."""
    y = int(y)
    if y < -1:
        raise DomainError("survival is defined for y >= -1")
    return model.sf(y)


def mean(model: CountModel) -> float:
    """E(Y); ``math.inf`` when the mean does not exist."""
    return model.mean()


def sample(model: CountModel, rng: np.random.Generator, count: int) -> np.ndarray:
    if int(count) < 1:
        raise DomainError("count must be at least 1")
    return model.sample(rng, count)


def tail_table(model: CountModel, M: int, cap: int = DEFAULT_CAP) -> TailTable:
    """Survival table up to truncation point M (see :class:`TailTable`)."""
    return model.tail_table(M, cap=cap)
