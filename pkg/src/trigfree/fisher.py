"""Expected Fisher information for NB / BNB baselines and their zero-inflated
and hurdle extensions, with inversion diagnostics and Wald intervals.

Every matrix is per observation.  The only infinite-series ingredients are
expectations E psi1(s + Y), taken from :mod:`trigfree.expect`.

Zero-inflated blocks are assembled generically from the baseline
information I, the baseline zero probability p0 and the baseline score at
zero s0.  With D = phi + (1 - phi) p0 and g = (1 - p0, (1 - phi) p0 s0),

    I_ZI = g g^T / D + [[(1 - p0)/(1 - phi), p0 s0^T],
                        [p0 s0,             (1 - phi)(I - p0 s0 s0^T)]].

The hurdle information is block diagonal:

    I_phi = 1 / (phi (1 - phi)),
    I_theta = (1 - phi) / (1 - p0) * (I - p0 s0 s0^T / (1 - p0)).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .counts import BetaNegBinomial, CountModel, NegBinomial
from .expect import psi1_many, resolve_M
from .specfun import DomainError, digamma, log_beta, normal_quantile, trigamma

__all__ = [
    "FIM_TOLERANCE",
    "CiSet",
    "FisherMatrix",
    "Inverse",
    "fim_bnb",
    "fim_family",
    "fim_hurdle",
    "fim_nb",
    "fim_zabnb",
    "fim_zanb",
    "fim_zibnb",
    "fim_zinb",
    "frobenius_distance",
    "invert",
    "max_ci_length_change",
    "wald_ci",
]

# Default truncation: drop tails below ~1e-20 of psi1(s) so the exactly
# rounded series no longer depends on M.
FIM_TOLERANCE = 1e-20


@dataclass(frozen=True)
class FisherMatrix:
    labels: tuple[str, ...]
    matrix: np.ndarray
    method: str = "trigamma_free"
    M: int | None = None

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] != len(self.labels):
            raise ValueError("matrix must be square and match the labels")
        object.__setattr__(self, "matrix", a)

    @property
    def d(self) -> int:
        return len(self.labels)

    def inverse(self) -> Inverse:
        return invert(self)


@dataclass(frozen=True)
class Inverse:
    matrix: np.ndarray
    condition: float
    min_eigenvalue: float
    singular: bool


@dataclass(frozen=True)
class CiSet:
    labels: tuple[str, ...]
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    N: int
    singular: bool = False
    se: np.ndarray = field(default=None)

    def contains(self, truth) -> np.ndarray:
        truth = np.asarray(truth, dtype=float)
        return (self.lower <= truth) & (truth <= self.upper)

    def rows(self):
        for k, lab in enumerate(self.labels):
            yield lab, float(self.estimate[k]), float(self.lower[k]), float(self.upper[k])


# ---------------------------------------------------------------- baselines

def _m_for(shifts, model: CountModel, M_policy, method: str) -> int:
    if isinstance(M_policy, (int, np.integer)):
        return int(M_policy)
    if M_policy is None:
        if method == "monte_carlo":
            raise DomainError("Monte Carlo needs an explicit sample size M")
        return max(resolve_M(s, model, ("tolerance", FIM_TOLERANCE * trigamma(s))) for s in shifts)
    return max(resolve_M(s, model, M_policy) for s in shifts)


def _nb_parts(nu, p, M_policy, method, rng):
    model = NegBinomial(nu, p)
    M = _m_for([nu], model, M_policy, method)
    (e,) = psi1_many([nu], model, M, method, rng)
    info = np.array([
        [trigamma(nu) - e.value, -1.0 / p],
        [-1.0 / p, nu / (p * p * (1.0 - p))],
    ])
    s0 = np.array([math.log(p), nu / p])
    logp0 = nu * math.log(p)
    return ("nu", "p"), info, s0, logp0, M


def _bnb_parts(nu, alpha, beta, M_policy, method, rng):
    model = BetaNegBinomial(nu, alpha, beta)
    c = nu + alpha + beta
    shifts = [nu, c, beta]
    M = _m_for(shifts, model, M_policy, method)
    ea, ec, eb = (r.value for r in psi1_many(shifts, model, M, method, rng))
    t_na, t_ab = trigamma(nu + alpha), trigamma(alpha + beta)
    info = np.empty((3, 3))
    info[0, 0] = trigamma(nu) - ea - t_na + ec
    info[0, 1] = ec - t_na
    info[0, 2] = ec
    info[1, 1] = ec - t_na + trigamma(alpha) - t_ab
    info[1, 2] = ec - t_ab
    info[2, 2] = trigamma(beta) - eb + ec - t_ab
    info[1, 0], info[2, 0], info[2, 1] = info[0, 1], info[0, 2], info[1, 2]
    d_c = digamma(c)
    d_ab = digamma(alpha + beta)
    d_na = digamma(nu + alpha)
    s0 = np.array([d_na - d_c, d_na - d_c - digamma(alpha) + d_ab, d_ab - d_c])
    logp0 = log_beta(nu + alpha, beta) - log_beta(alpha, beta)
    return ("nu", "alpha", "beta"), info, s0, logp0, M


def fim_nb(nu, p, M_policy=None, method="trigamma_free", rng=None) -> FisherMatrix:
    """Information of NB(nu, p) in (nu, p)."""
    labels, info, _, _, M = _nb_parts(nu, p, M_policy, method, rng)
    return FisherMatrix(labels, info, method, M)


def fim_bnb(nu, alpha, beta, M_policy=None, method="trigamma_free", rng=None) -> FisherMatrix:
    """Information of BNB(nu, alpha, beta) in (nu, alpha, beta)."""
    labels, info, _, _, M = _bnb_parts(nu, alpha, beta, M_policy, method, rng)
    return FisherMatrix(labels, info, method, M)


def _zi_assemble(phi, info, s0, logp0):
    if not 0.0 < phi < 1.0:
        raise DomainError(f"phi must lie in (0, 1), got {phi!r}")
    p0 = math.exp(logp0)
    q0 = -math.expm1(logp0)
    D = phi + (1.0 - phi) * p0
    g = np.concatenate(([q0], (1.0 - phi) * p0 * s0))
    out = np.outer(g, g) / D
    out[0, 0] += q0 / (1.0 - phi)
    out[0, 1:] += p0 * s0
    out[1:, 0] += p0 * s0
    out[1:, 1:] += (1.0 - phi) * (info - p0 * np.outer(s0, s0))
    return out


def _hurdle_assemble(phi, info, s0, logp0):
    if not 0.0 < phi < 1.0:
        raise DomainError(f"phi must lie in (0, 1), got {phi!r}")
    p0 = math.exp(logp0)
    q0 = -math.expm1(logp0)
    if q0 <= 0.0:
        raise DomainError("hurdle base must put mass on positive counts")
    k = len(s0)
    out = np.zeros((k + 1, k + 1))
    out[0, 0] = 1.0 / (phi * (1.0 - phi))
    out[1:, 1:] = (1.0 - phi) / q0 * (info - p0 * np.outer(s0, s0) / q0)
    return out


def fim_zinb(phi, nu, p, M_policy=None, method="trigamma_free", rng=None) -> FisherMatrix:
    """Zero-inflated NB information in (phi, nu, p)."""
    labels, info, s0, logp0, M = _nb_parts(nu, p, M_policy, method, rng)
    return FisherMatrix(("phi",) + labels, _zi_assemble(phi, info, s0, logp0), method, M)


def fim_zibnb(phi, nu, alpha, beta, M_policy=None, method="trigamma_free", rng=None) -> FisherMatrix:
    """Zero-inflated BNB information in (phi, nu, alpha, beta)."""
    labels, info, s0, logp0, M = _bnb_parts(nu, alpha, beta, M_policy, method, rng)
    return FisherMatrix(("phi",) + labels, _zi_assemble(phi, info, s0, logp0), method, M)


def fim_zanb(phi, nu, p, M_policy=None, method="trigamma_free", rng=None) -> FisherMatrix:
    """Hurdle NB information in (phi, nu, p)."""
    labels, info, s0, logp0, M = _nb_parts(nu, p, M_policy, method, rng)
    return FisherMatrix(("phi",) + labels, _hurdle_assemble(phi, info, s0, logp0), method, M)


def fim_zabnb(phi, nu, alpha, beta, M_policy=None, method="trigamma_free", rng=None) -> FisherMatrix:
    """Hurdle BNB information in (phi, nu, alpha, beta)."""
    labels, info, s0, logp0, M = _bnb_parts(nu, alpha, beta, M_policy, method, rng)
    return FisherMatrix(("phi",) + labels, _hurdle_assemble(phi, info, s0, logp0), method, M)


def fim_hurdle(phi, base_params: dict, M_policy=None, method="trigamma_free", rng=None) -> FisherMatrix:
    """Hurdle information for an NB (``nu``, ``p``) or BNB (``nu``, ``alpha``,
    ``beta``) baseline given as a dict."""
    keys = set(base_params)
    if keys == {"nu", "p"}:
        return fim_zanb(phi, base_params["nu"], base_params["p"], M_policy, method, rng)
    if keys == {"nu", "alpha", "beta"}:
        return fim_zabnb(phi, base_params["nu"], base_params["alpha"], base_params["beta"],
                         M_policy, method, rng)
    raise DomainError(f"unrecognised baseline parameters {sorted(keys)}")


_BUILDERS = {
    "nb": fim_nb,
    "bnb": fim_bnb,
    "zinb": fim_zinb,
    "zibnb": fim_zibnb,
    "zanb": fim_zanb,
    "zabnb": fim_zabnb,
}


def fim_family(family: str, params: dict, M_policy=None, method="trigamma_free", rng=None) -> FisherMatrix:
    """Information for a family name and a natural-scale parameter dict."""
    from .infer import FAMILIES

    try:
        build = _BUILDERS[family]
    except KeyError:
        raise DomainError(f"unknown family {family!r}") from None
    args = [params[k] for k in FAMILIES[family]]
    return build(*args, M_policy=M_policy, method=method, rng=rng)


# ---------------------------------------------------------------- inversion and metrics

def _as_matrix(F) -> np.ndarray:
    a = F.matrix if isinstance(F, FisherMatrix) else np.asarray(F, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    return a


def invert(F) -> Inverse:
    """Symmetric inverse with conditioning diagnostics.

    Uses a Cholesky solve when the smallest eigenvalue clears
    1e3 * eps * ||F||; otherwise returns the eigen pseudo-inverse with
    ``singular=True`` (never regularises silently).
    """
    a = _as_matrix(F)
    w, v = np.linalg.eigh(a)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    lo = float(w[0]) if w.size else 0.0
    cond = scale / abs(lo) if lo != 0.0 else math.inf
    thresh = 1e3 * np.finfo(float).eps * scale
    if lo > thresh:
        try:
            c = linalg.cho_factor(a, lower=True)
            inv = linalg.cho_solve(c, np.eye(a.shape[0]))
            return Inverse((inv + inv.T) / 2.0, cond, lo, False)
        except linalg.LinAlgError:
            pass
    keep = np.abs(w) > thresh
    inv = (v[:, keep] / w[keep]) @ v[:, keep].T
    return Inverse(inv, cond, lo, True)


def frobenius_distance(A, B) -> float:
    a, b = _as_matrix(A), _as_matrix(B)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b, "fro"))


def max_ci_length_change(Ainv, Binv) -> float:
    """max_k |sqrt(a_kk) - sqrt(b_kk)| over the diagonals of two inverses.

    A negative diagonal means the input was not PSD; that is warned about
    and the result is nan.
    """
    a = np.diag(_as_matrix(Ainv.matrix if isinstance(Ainv, Inverse) else Ainv))
    b = np.diag(_as_matrix(Binv.matrix if isinstance(Binv, Inverse) else Binv))
    if a.shape != b.shape:
        raise ValueError("shape mismatch")
    if np.any(a < 0) or np.any(b < 0):
        warnings.warn("negative diagonal in inverse information", RuntimeWarning, stacklevel=2)
        return math.nan
    return float(np.max(np.abs(np.sqrt(a) - np.sqrt(b))))


def wald_ci(estimates, F, N: int, level: float = 0.95) -> CiSet:
    """estimate_k +/- z * sqrt((F^{-1})_kk / N) with F per observation."""
    if N < 1:
        raise DomainError("N must be at least 1")
    if not 0.0 < level < 1.0:
        raise DomainError("level must lie in (0, 1)")
    inv = invert(F)
    est = np.asarray(estimates, dtype=float)
    z = normal_quantile(0.5 + level / 2.0)
    se = np.sqrt(np.maximum(np.diag(inv.matrix), 0.0) / N)
    labels = F.labels if isinstance(F, FisherMatrix) else tuple(f"x{k}" for k in range(len(est)))
    return CiSet(tuple(labels), est, est - z * se, est + z * se, level, int(N), inv.singular, se)
