"""
One expectation, four ways
==========================

E[psi1(nu + Y)] for Y ~ NB(10, 0.1) and nu = 10 turns up in the Fisher
information of the negative binomial.  This walk-through computes it with
the trigamma-free series, its calibrated variant, the GFWL sum and plain
Monte Carlo, and counts how often each one calls the trigamma function.

Run with ``python demos/01_one_expectation.py``.
"""
import numpy as np

from trigfree.counts import NegBinomial, make_rng
from trigfree.expect import choose_M, psi1_expect, truncation_bound
from trigfree.specfun import count_trigamma

nu = 10.0
model = NegBinomial(10, 0.1)
print("mean of Y:", model.mean())

# A very long series gives the value everything else is compared with.
reference = psi1_expect(nu, model, 10**6).value
print(f"reference (M = 1e6): {reference:.12f}")

# The default truncation point is the first integer above 2 E(Y).
M = choose_M(nu, model)
print("default M:", M)
print(f"guaranteed error bound at that M: {truncation_bound(nu, model, M):.3e}")
print()

rng = make_rng(2024)
print(f"{'method':<15}{'value':>18}{'error':>14}{'trigamma calls':>16}")
for method in ("trigamma_free", "calibrated", "gfwl", "monte_carlo"):
    with count_trigamma() as calls:
        r = psi1_expect(nu, model, M, method, rng if method == "monte_carlo" else None)
    print(f"{method:<15}{r.value:>18.12f}{r.value - reference:>14.2e}{calls():>16d}")

# The series converges quickly once M passes the bulk of the distribution.
print()
print("trigamma-free error as M grows")
for M in (50, 100, 150, 181, 250, 400):
    err = psi1_expect(nu, model, M).value - reference
    print(f"  M = {M:>4d}: {err:.3e}")

# Monte Carlo error shrinks like 1/sqrt(M) and stays random.
print()
print("Monte Carlo spread over 50 seeds at M = 181")
draws = [psi1_expect(nu, model, 181, "monte_carlo", make_rng(7, r)).value - reference for r in range(50)]
print(f"  median |error| {np.median(np.abs(draws)):.3e}, max |error| {np.max(np.abs(draws)):.3e}")
