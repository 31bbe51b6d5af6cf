"""
Best uniform rational approximation of z^-s
===========================================

Compute the degree (k, k) minimax approximant of z^-s on [1, 1e4], look at
its equioscillating error, turn it into partial fractions and apply it to a
matrix through k shifted solves.
"""

import numpy as np

from fracrkm.operator import make_fd_laplacian_1d, m_norm
from fracrkm.rational import brasil_best_approx, poles, to_partial_fractions
from fracrkm.schemes import solve_direct, solve_oracle

s, interval = 0.5, (1.0, 1e4)

# the error drops quickly with the degree
print("  k   max error   deviation  iterations")
for k in range(0, 11, 2):
    rep = brasil_best_approx(s, interval, k)
    print(f" {k:2d}   {rep.max_error:.3e}   {rep.equioscillation_deviation:.1e}   {rep.iterations:4d}")

# 2k + 2 extrema of alternating sign and (nearly) equal size
rep = brasil_best_approx(s, interval, 4)
print("\nk = 4 extrema and signed errors")
for z, e in zip(rep.extrema, rep.signed_errors):
    print(f"  z = {z:10.4f}   e = {e:+.6e}")

# the poles are real and negative, so every shifted system is SPD
pf = to_partial_fractions(rep.approximant, fit_interval=interval)
print("\npoles:", np.array2string(poles(rep.approximant), precision=4))
print("residues:", np.array2string(pf.residues, precision=4))
print(f"c0 = {pf.c0:.6e}")

# apply r(L) b and compare with the eigendecomposition; the error stays below
# max_error * ||b|| whenever the spectrum lies in the interval
pencil = make_fd_laplacian_1d(100)
b = np.ones(pencil.n)
exact = solve_oracle(pencil, b, s).solution
for k in (2, 4, 8):
    res = solve_direct(pencil, b, s, k)
    err = m_norm(pencil, res.solution - exact)
    print(f"k = {k}: error {err:.3e}  <=  {res.metadata['max_error'] * m_norm(pencil, b):.3e}")
