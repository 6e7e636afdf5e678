"""Maximum likelihood for NB / BNB count models, their zero-inflated and
hurdle versions, and regressions where each parameter has its own link and
linear predictor.

Parameters are optimised on an unconstrained scale (log for positive
parameters, logit for probabilities): a Nelder-Mead pass first, then BFGS
with central finite-difference gradients.  The objective is the mean
negative log-likelihood per observation, and ``grad_norm`` refers to it.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .fisher import FisherMatrix, fim_family
from .specfun import DomainError, normal_cdf, normal_quantile

__all__ = [
    "FAMILIES",
    "Dataset",
    "MleFit",
    "RegressionSpec",
    "fit_probabilistic",
    "fit_regression",
    "fitted_params",
    "link_apply",
    "link_derivative",
    "link_invert",
    "loglik",
    "model_for",
    "regression_fim",
]

FAMILIES = {
    "nb": ("nu", "p"),
    "bnb": ("nu", "alpha", "beta"),
    "zinb": ("phi", "nu", "p"),
    "zibnb": ("phi", "nu", "alpha", "beta"),
    "zanb": ("phi", "nu", "p"),
    "zabnb": ("phi", "nu", "alpha", "beta"),
}
_DEFAULT_LINK = {"phi": "logit", "p": "logit", "nu": "log", "alpha": "log", "beta": "log"}
FD_STEP = 1e-6
GRAD_TOL = 1e-5


def _family(name: str) -> tuple[str, ...]:
    try:
        return FAMILIES[name]
    except KeyError:
        raise DomainError(f"unknown family {name!r}; choose from {sorted(FAMILIES)}") from None


# ---------------------------------------------------------------- links

def link_apply(link: str, x):
    """eta = g(x)."""
    x = np.asarray(x, dtype=float)
    if link == "log":
        if np.any(x <= 0):
            raise DomainError("log link needs positive values")
        out = np.log(x)
    elif link in ("logit", "probit"):
        if np.any((x <= 0) | (x >= 1)):
            raise DomainError(f"{link} link needs values in (0, 1)")
        out = np.asarray(special.logit(x) if link == "logit" else normal_quantile(x))
    else:
        raise DomainError(f"unknown link {link!r}")
    return out[()] if out.ndim == 0 else out


def link_invert(link: str, eta):
    """x = g^{-1}(eta)."""
    eta = np.asarray(eta, dtype=float)
    if link == "log":
        out = np.exp(eta)
    elif link == "logit":
        out = special.expit(eta)
    elif link == "probit":
        out = np.asarray(normal_cdf(eta))
    else:
        raise DomainError(f"unknown link {link!r}")
    return out[()] if out.ndim == 0 else out


def link_derivative(link: str, eta):
    """d g^{-1}(eta) / d eta, the Jacobian factor used for coefficients."""
    eta = np.asarray(eta, dtype=float)
    if link == "log":
        out = np.exp(eta)
    elif link == "logit":
        m = special.expit(eta)
        out = m * (1.0 - m)
    elif link == "probit":
        out = np.exp(-0.5 * eta * eta) / math.sqrt(2.0 * math.pi)
    else:
        raise DomainError(f"unknown link {link!r}")
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------- densities

def _base_logpmf(baseline: str, y, par):
    nu = par["nu"]
    common = special.gammaln(nu + y) - special.gammaln(y + 1.0) - special.gammaln(nu)
    if baseline == "nb":
        p = par["p"]
        return common + nu * np.log(p) + y * np.log1p(-p), nu * np.log(p)
    a, b = par["alpha"], par["beta"]
    lb = special.betaln(a, b)
    return common + special.betaln(nu + a, y + b) - lb, special.betaln(nu + a, b) - lb


def _logpdf(family: str, y, par):
    baseline = "bnb" if family.endswith("bnb") else "nb"
    lf, lp0 = _base_logpmf(baseline, y, par)
    if family in ("nb", "bnb"):
        return lf
    phi = par["phi"]
    zero = y == 0
    if family.startswith("zi"):
        return np.where(zero, np.logaddexp(np.log(phi), np.log1p(-phi) + lp0), np.log1p(-phi) + lf)
    with np.errstate(divide="ignore"):
        lq0 = np.log(-np.expm1(lp0))
    return np.where(zero, np.log(phi), np.log1p(-phi) + lf - lq0)


def _check_params(family: str, params: dict) -> dict:
    out = {}
    for k in _family(family):
        v = np.asarray(params[k], dtype=float)
        if k in ("phi", "p"):
            if np.any((v <= 0) | (v >= 1)):
                raise DomainError(f"{k} must lie in (0, 1)")
        elif np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise DomainError(f"{k} must be positive and finite")
        out[k] = v
    return out


def _check_counts(data) -> np.ndarray:
    y = np.asarray(data)
    if y.ndim != 1 or y.size == 0:
        raise DomainError("data must be a non-empty 1-d array of counts")
    yf = y.astype(float)
    if np.any(yf < 0) or np.any(yf != np.floor(yf)) or not np.all(np.isfinite(yf)):
        raise DomainError("data must be non-negative integers")
    return yf


def loglik(family: str, params: dict, data) -> float:
    """Sum of log densities; -inf (with a warning) if some point is impossible."""
    par = _check_params(family, params)
    y = _check_counts(data)
    if family.startswith("za"):
        base = _base_logpmf("bnb" if family.endswith("bnb") else "nb", np.zeros(1), par)[1]
        if np.any(base == 0.0) and np.any(y > 0):
            raise DomainError("hurdle base has P(0) = 1 but the data contain positive counts")
    if all(np.ndim(v) == 0 for v in par.values()):
        yu, cnt = np.unique(y, return_counts=True)
        ll = float(np.dot(cnt, _logpdf(family, yu, par)))
    else:
        ll = float(np.sum(_logpdf(family, y, par)))
    if not math.isfinite(ll):
        warnings.warn("zero-probability observation in log-likelihood", RuntimeWarning, stacklevel=2)
        return -math.inf
    return ll


def model_for(family: str, params: dict):
    """The :mod:`trigfree.counts` model with these (scalar) parameters."""
    from .counts import BetaNegBinomial, Hurdle, NegBinomial, ZeroInflated

    par = {k: float(params[k]) for k in _family(family)}
    base = (BetaNegBinomial(par["nu"], par["alpha"], par["beta"]) if family.endswith("bnb")
            else NegBinomial(par["nu"], par["p"]))
    if family.startswith("zi"):
        return ZeroInflated(par["phi"], base)
    if family.startswith("za"):
        return Hurdle(par["phi"], base)
    return base


# ---------------------------------------------------------------- fits

@dataclass(frozen=True)
class MleFit:
    family: str
    labels: tuple[str, ...]
    theta: np.ndarray
    params: dict
    loglik: float
    converged: bool
    iterations: int
    grad_norm: float
    n: int
    message: str = ""

    @property
    def k(self) -> int:
        return len(self.labels)

    @property
    def aic(self) -> float:
        return 2.0 * self.k - 2.0 * self.loglik

    @property
    def bic(self) -> float:
        return self.k * math.log(self.n) - 2.0 * self.loglik

    def estimates(self) -> np.ndarray:
        return np.array([self.params[k] for k in self.labels])


def _fd_grad(f, x, h=FD_STEP):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def _fd_hessian(f, x, h=1e-4):
    H = np.empty((x.size, x.size))
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        H[i] = (_fd_grad(f, x + e) - _fd_grad(f, x - e)) / (2.0 * h)
    return (H + H.T) / 2.0


def _newton_polish(f, x, steps=8):
    # BFGS line searches stall once the remaining decrease is below the
    # resolution of f; Newton steps on the gradient do not need to see it.
    g = _fd_grad(f, x)
    gn = float(np.linalg.norm(g))
    fx = f(x)
    for _ in range(steps):
        if gn < 0.1 * GRAD_TOL:
            break
        try:
            step = np.linalg.solve(_fd_hessian(f, x), g)
        except np.linalg.LinAlgError:
            break
        xn = x - step
        gnew = _fd_grad(f, xn)
        gnn = float(np.linalg.norm(gnew))
        fn = f(xn)
        if not (gnn < gn and fn <= fx + 1e-9 * max(1.0, abs(fx))):
            break
        x, g, gn, fx = xn, gnew, gnn, fn
    return x, gn


def _minimise(nll, x0, maxiter):
    def safe(x):
        v = nll(x)
        return v if math.isfinite(v) else 1e100

    nm = optimize.minimize(safe, x0, method="Nelder-Mead",
                           options={"maxiter": maxiter, "maxfev": 4 * maxiter,
                                    "xatol": 1e-7, "fatol": 1e-9, "adaptive": x0.size > 3})
    x, its = nm.x, int(nm.nit)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        bf = optimize.minimize(safe, x, jac=lambda z: _fd_grad(safe, z), method="BFGS",
                               options={"maxiter": maxiter, "gtol": 1e-7})
    its += int(bf.nit)
    if bf.fun <= safe(x):
        x = bf.x
    x, g = _newton_polish(safe, x)
    return x, safe(x), its, g


def _moment_nb(y):
    m = float(np.mean(y)) if y.size else 1.0
    v = float(np.var(y)) if y.size > 1 else 2.0 * m
    m = max(m, 1e-3)
    if v <= m * 1.01:
        v = m * 1.5
    p = m / v
    return {"nu": m * p / (1.0 - p), "p": p}


def _initial(family: str, y: np.ndarray) -> dict:
    par = {}
    baseline = "bnb" if family.endswith("bnb") else "nb"
    pos = y[y > 0]
    src = y if family in ("nb", "bnb") else pos
    if baseline == "nb":
        par.update(_moment_nb(src))
    else:
        par.update({"nu": 3.0, "alpha": 4.0, "beta": 3.0})
    if family.startswith("za"):
        par["phi"] = min(max(float(np.mean(y == 0)), 0.01), 0.99)
    elif family.startswith("zi"):
        p0 = math.exp(float(_base_logpmf(baseline, 0.0, par)[1]))
        z = float(np.mean(y == 0))
        par["phi"] = min(max((z - p0) / max(1.0 - p0, 1e-12), 0.02), 0.9)
    return par


def _to_internal(labels, params):
    return np.array([float(link_apply(_DEFAULT_LINK[k], params[k])) for k in labels])


def _from_internal(labels, theta):
    return {k: float(link_invert(_DEFAULT_LINK[k], t)) for k, t in zip(labels, theta)}


def fit_probabilistic(family: str, data, init: dict | None = None, maxiter: int = 2000) -> MleFit:
    """MLE of an i.i.d. count model; deterministic given (data, init)."""
    labels = _family(family)
    y = _check_counts(data)
    if y.size < 10:
        raise DomainError("need at least 10 observations")
    if family[:2] in ("zi", "za") and not np.any(y > 0):
        raise DomainError("all-zero data cannot identify a zero-inflated or hurdle model")
    start = dict(init) if init else _initial(family, y)
    yu, cnt = np.unique(y, return_counts=True)

    def nll(theta):
        par = {k: np.float64(v) for k, v in _from_internal(labels, theta).items()}
        if any(not (0 < v < 1) for k, v in par.items() if k in ("phi", "p")):
            return math.inf
        with np.errstate(all="ignore"):
            return -float(np.dot(cnt, _logpdf(family, yu, par))) / y.size

    x, fun, its, g = _minimise(nll, _to_internal(labels, start), maxiter)
    ok = math.isfinite(fun) and g < GRAD_TOL
    return MleFit(family, labels, x, _from_internal(labels, x), -fun * y.size, ok, its, g, int(y.size),
                  "" if ok else "gradient tolerance not reached")


# ---------------------------------------------------------------- regression

@dataclass(frozen=True)
class Dataset:
    """Counts plus an n x d covariate matrix with column names."""

    responses: np.ndarray
    covariates: np.ndarray
    names: tuple[str, ...]
    response_name: str = "y"

    def __post_init__(self):
        y = np.asarray(self.responses)
        X = np.asarray(self.covariates, dtype=float).reshape(len(y), -1)
        if X.shape[1] != len(self.names):
            raise DomainError("covariate columns and names differ in length")
        if np.any(y < 0):
            raise DomainError("responses must be non-negative")
        if not np.all(np.isfinite(X)):
            raise DomainError("covariates contain missing or non-finite values")
        object.__setattr__(self, "responses", y.astype(np.int64))
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def n(self) -> int:
        return len(self.responses)

    def column(self, name: str) -> np.ndarray:
        return self.covariates[:, self.names.index(name)]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.names == other.names and self.response_name == other.response_name
                and np.array_equal(self.responses, other.responses)
                and np.array_equal(self.covariates, other.covariates))

    __hash__ = None


@dataclass(frozen=True)
class RegressionSpec:
    """Per-parameter links and predictor columns.

    ``columns`` maps a parameter name to the covariates in its predictor
    (an intercept is always included); parameters not listed use every
    covariate.  ``links`` overrides the default link per parameter.
    """

    family: str = "zinb"
    zero_link: str = "logit"
    links: dict = field(default_factory=dict)
    columns: dict | None = None

    def __post_init__(self):
        _family(self.family)
        if self.zero_link not in ("logit", "probit"):
            raise DomainError("zero link must be logit or probit")

    @property
    def params(self) -> tuple[str, ...]:
        return FAMILIES[self.family]

    def link(self, name: str) -> str:
        if name in self.links:
            return self.links[name]
        if name == "phi":
            return self.zero_link
        return _DEFAULT_LINK[name]

    def cols(self, name: str, data: Dataset) -> tuple[str, ...]:
        if self.columns is not None and name in self.columns:
            return tuple(self.columns[name])
        return data.names

    def designs(self, data: Dataset) -> list[np.ndarray]:
        out = []
        for name in self.params:
            cols = self.cols(name, data)
            X = np.column_stack([np.ones(data.n)] + [data.column(c) for c in cols])
            _check_rank(X, ("(Intercept)",) + cols, name)
            out.append(X)
        return out

    def coef_labels(self, data: Dataset) -> tuple[str, ...]:
        return tuple(f"{name}:{c}" for name in self.params
                     for c in ("(Intercept)",) + self.cols(name, data))


def _check_rank(X, names, block):
    r = np.linalg.matrix_rank(X)
    if r == X.shape[1]:
        return
    bad = []
    for j in range(1, X.shape[1]):
        if np.linalg.matrix_rank(X[:, : j + 1]) <= np.linalg.matrix_rank(X[:, :j]):
            bad.append(names[j])
    raise DomainError(f"rank-deficient design for {block}: rank {r} < {X.shape[1]} columns; "
                      f"linearly dependent columns: {', '.join(bad)}")


def _split(theta, designs):
    out, i = [], 0
    for X in designs:
        k = X.shape[1]
        out.append(theta[i: i + k])
        i += k
    return out


def _params_from(spec, designs, theta):
    etas = [X @ b for X, b in zip(designs, _split(theta, designs))]
    par = {name: link_invert(spec.link(name), eta) for name, eta in zip(spec.params, etas)}
    return par, etas


def fit_regression(spec: RegressionSpec, data: Dataset, init=None, maxiter: int = 2000) -> MleFit:
    """MLE of stacked coefficients for every parameter's linear predictor."""
    designs = spec.designs(data)
    labels = spec.coef_labels(data)
    if data.n <= len(labels):
        raise DomainError("more coefficients than observations")
    y = data.responses.astype(float)
    if spec.family[:2] in ("zi", "za") and not np.any(y > 0):
        raise DomainError("all-zero responses cannot identify the model")
    if init is None:
        start = _initial(spec.family, y)
        theta0 = []
        for name, X in zip(spec.params, designs):
            b = np.zeros(X.shape[1])
            b[0] = float(link_apply(spec.link(name), start[name]))
            theta0.append(b)
        theta0 = np.concatenate(theta0)
    else:
        theta0 = np.asarray(init, dtype=float)

    def nll(theta):
        with np.errstate(all="ignore"):
            par, _ = _params_from(spec, designs, theta)
            for k in ("phi", "p"):
                if k in par and np.any((par[k] <= 0) | (par[k] >= 1)):
                    return math.inf
            return -float(np.sum(_logpdf(spec.family, y, par))) / data.n

    x, fun, its, g = _minimise(nll, theta0, maxiter)
    ok = math.isfinite(fun) and g < GRAD_TOL
    return MleFit(spec.family, labels, x, dict(zip(labels, map(float, x))), -fun * data.n, ok, its, g,
                  data.n, "" if ok else "gradient tolerance not reached")


def fitted_params(spec: RegressionSpec, fit: MleFit, data: Dataset) -> dict:
    """Per-observation natural-scale parameters at the fitted coefficients."""
    par, _ = _params_from(spec, spec.designs(data), np.asarray(fit.theta))
    return par


def regression_fim(spec: RegressionSpec, fit: MleFit, data: Dataset, M_policy=None,
                   method: str = "trigamma_free", rng=None) -> FisherMatrix:
    """Average over observations of J_i^T F_i J_i in coefficient space.

    F_i is the per-observation information at the fitted parameters and
    J_i the Jacobian of those parameters with respect to the coefficients.
    """
    designs = spec.designs(data)
    par, etas = _params_from(spec, designs, np.asarray(fit.theta))
    names = spec.params
    n = data.n
    d = len(names)
    F = np.empty((n, d, d))
    Ms = []
    for i in range(n):
        Fi = fim_family(spec.family, {k: float(par[k][i]) for k in names}, M_policy, method, rng)
        F[i] = Fi.matrix
        Ms.append(Fi.M)
    D = np.column_stack([link_derivative(spec.link(k), eta) for k, eta in zip(names, etas)])
    blocks = [[None] * d for _ in range(d)]
    for s in range(d):
        for t in range(d):
            w = F[:, s, t] * D[:, s] * D[:, t]
            blocks[s][t] = designs[s].T @ (w[:, None] * designs[t]) / n
    out = np.block(blocks)
    return FisherMatrix(spec.coef_labels(data), (out + out.T) / 2.0, method, max(Ms) if Ms else None)
