"""Trigamma-free expectations E psi1(nu + Y) for count variables, and the
Fisher information, inference and study tooling built on them."""

__version__ = "0.1.0"

from .counts import (
                     BetaBinomial,
                     BetaNegBinomial,
                     Binomial,
                     Hurdle,
                     NegBinomial,
                     ZeroInflated,
                     make_rng,
                     tail_table,
)
from .expect import (
                     choose_M,
                     psi1_calibrated,
                     psi1_exact_finite,
                     psi1_gfwl,
                     psi1_monte_carlo,
                     psi1_trigamma_free,
                     psi_digamma_expect,
                     truncation_bound,
)
from .specfun import DomainError, digamma, log_beta, log_gamma, trigamma

__all__ = [
                     "BetaBinomial",
                     "BetaNegBinomial",
                     "Binomial",
                     "DomainError",
                     "Hurdle",
                     "NegBinomial",
                     "ZeroInflated",
                     "choose_M",
                     "digamma",
                     "log_beta",
                     "log_gamma",
                     "make_rng",
                     "psi1_calibrated",
                     "psi1_exact_finite",
                     "psi1_gfwl",
                     "psi1_monte_carlo",
                     "psi1_trigamma_free",
                     "psi_digamma_expect",
                     "tail_table",
                     "trigamma",
                     "truncation_bound",
]
