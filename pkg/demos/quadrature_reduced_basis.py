"""
Quadrature-based reduced basis solvers
======================================

Sinc and Gauss-Laguerre discretizations of the integral representation of
L^-s b, evaluated on a small reduced basis, reproduce the Rayleigh-Ritz
extraction from the same space.  The snapshots come from a weak greedy
search over a log-spaced training set.
"""

import numpy as np

from fracrkm.krylov import PoleSet
from fracrkm.operator import make_fd_laplacian_2d, m_norm
from fracrkm.schemes import (
    gauss_sizes,
    greedy_snapshots,
    sinc_grid,
    solve_gauss_rbm,
    solve_oracle,
    solve_rkm,
    solve_sinc_rbm,
)

pencil = make_fd_laplacian_2d(31)
b = np.ones(pencil.n)
bnorm = m_norm(pencil, b)

# one sinc grid serves every s in [0.2, 0.8]
grid = sinc_grid(0.15, 0.2, 0.8)
print(f"sinc grid: k* = {grid.k_star}, M = {grid.M_s}, N = {grid.N_s}, {grid.size} nodes")

# greedy picks are nested, so one run gives every smaller space too
picks = greedy_snapshots(pencil, b, k=12).snapshots
print("greedy snapshots:", " ".join("inf" if t == np.inf else f"{t:.3g}" for t in picks))

print("\n  k     s   ||u_rkm - u_sinc|| / ||b||   error of u_rkm")
for k in (4, 8, 12):
    snaps = picks[: k + 1]
    for s in (0.2, 0.5, 0.8):
        u_rkm = solve_rkm(pencil, b, s, PoleSet.from_snapshots(snaps), "greedy").solution
        u_sinc = solve_sinc_rbm(pencil, b, s, snaps, grid).solution
        err = m_norm(pencil, u_rkm - solve_oracle(pencil, b, s).solution) / bnorm
        print(f" {k:2d}   {s}   {m_norm(pencil, u_rkm - u_sinc) / bnorm:.2e}                  {err:.2e}")

# the split Gauss-Laguerre rule needs far fewer nodes at s = 0.5
print("\nGauss-Laguerre sizes (M-, M+) at s = 0.5:", gauss_sizes(0.5, 0.15))
snaps = picks[:9]
u_rkm = solve_rkm(pencil, b, 0.5, PoleSet.from_snapshots(snaps), "greedy").solution
u_gauss = solve_gauss_rbm(pencil, b, 0.5, snaps, snaps, k_star=0.15).solution
print(f"||u_rkm - u_gauss|| / ||b|| = {m_norm(pencil, u_rkm - u_gauss) / bnorm:.2e}")
