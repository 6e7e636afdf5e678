"""
Fisher information for zero-inflated models
===========================================

The expected information of a ZINB or ZIBNB model needs a few series
expectations.  Once the truncation point is past the point where the
remaining terms are negligible, every ingredient is exactly rounded, so the
matrix stops changing at all.  This script shows that, then turns the
matrix into Wald intervals.
"""
import numpy as np

from trigfree.counts import ZeroInflated, NegBinomial, make_rng
from trigfree.fisher import fim_zibnb, fim_zinb, frobenius_distance, invert, max_ci_length_change, wald_ci
from trigfree.infer import fit_probabilistic

np.set_printoptions(precision=6, suppress=False, linewidth=110)

F = fim_zinb(0.4, 10, 0.1)
print("ZINB(0.4, 10, 0.1), default truncation M =", F.M)
print(F.matrix)
inv = invert(F)
print("condition number:", f"{inv.condition:.3e}", " singular:", inv.singular)

# Beyond the tolerance point the matrices are bit-identical.
ref = invert(fim_zinb(0.4, 10, 0.1, 10**6))
print()
for M in (150, 300, 1000, 5000, 20000):
    G = invert(fim_zinb(0.4, 10, 0.1, M))
    print(f"M = {M:>5d}: Frobenius distance {frobenius_distance(G.matrix, ref.matrix):.3e}, "
          f"max CI length change {max_ci_length_change(G, ref):.3e}")

# The Monte Carlo version of the same matrix keeps moving.
print()
for M in (1000, 5000, 20000):
    G = invert(fim_zinb(0.4, 10, 0.1, M, "monte_carlo", make_rng(3, M)))
    print(f"Monte Carlo M = {M:>5d}: Frobenius distance {frobenius_distance(G.matrix, ref.matrix):.3e}")

# Fit a simulated sample and report 95% intervals.
y = ZeroInflated(0.4, NegBinomial(10, 0.1)).sample(make_rng(11), 1000)
fit = fit_probabilistic("zinb", y)
print()
print("fit:", {k: round(v, 4) for k, v in fit.params.items()}, "converged:", fit.converged)
ci = wald_ci(fit.estimates(), fim_zinb(*fit.estimates()), len(y))
for label, est, lo, hi in ci.rows():
    print(f"  {label:<4} {est:9.4f}  [{lo:9.4f}, {hi:9.4f}]")

# The beta negative binomial has a heavy tail, so the default M is larger,
# but the matrix is still invertible.
G = fim_zibnb(0.2, 5.0, 6.0, 2.0)
print()
print("ZIBNB(0.2, 5, 6, 2), M =", G.M)
print(G.matrix)
print("condition number:", f"{invert(G).condition:.3e}")

# nu and beta enter the BNB pmf symmetrically, so at nu == beta the two
# score components coincide and the matrix is singular.
print("singular at nu == beta:", invert(fim_zibnb(0.2, 5.0, 6.0, 5.0)).singular)
