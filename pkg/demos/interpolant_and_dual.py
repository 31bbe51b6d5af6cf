"""
The rational interpolant behind a Krylov approximation
======================================================

Rayleigh-Ritz extraction from a rational Krylov space applies a rational
function r to L: r has the poles of the space and interpolates f at the
rational Ritz values.  The dual reduced basis scheme post-processes the
same space through L^-1.
"""

import numpy as np

from fracrkm.krylov import PoleSet, build_basis, dual_rbm, extract, spectral_interpolant
from fracrkm.operator import make_fd_laplacian_1d, m_norm, shifted_solve, spectral_interval
from fracrkm.rational import to_partial_fractions
from fracrkm.schemes import solve_oracle, zolotarev_snapshots

pencil = make_fd_laplacian_1d(200)
b = np.sin(np.linspace(0, 3, pencil.n)) + 1.0
s = 0.5
f = lambda z: z ** (-s)
interval = spectral_interval(pencil)
snaps = zolotarev_snapshots(5, interval)

# Ritz values sit inside the spectral interval
basis = build_basis(pencil, b, snaps)
print("rational Ritz values:", np.array2string(basis.ritz_values, precision=4))

# r(mu_j) = f(mu_j), with the poles of the space
r = spectral_interpolant(basis, f)
print("max |r - f| at the Ritz values:", np.abs(r(basis.ritz_values) - f(basis.ritz_values)).max())

# r(L) b via partial fractions reproduces the extraction
pf = to_partial_fractions(r, pole_list=basis.poles.finite)
u_r = pf.c0 * b + sum(c * shifted_solve(pencil, d, b) for c, d in pf.terms)
u = extract(basis, f)
print(f"||extract - r(L) b|| / ||b|| = {m_norm(pencil, u - u_r) / m_norm(pencil, b):.2e}")

# the dual scheme uses the same snapshots and is typically close to the primal one
exact = solve_oracle(pencil, b, s).solution
u_dual = dual_rbm(pencil, b, snaps, s)
print(f"primal error {m_norm(pencil, u - exact):.3e}, dual error {m_norm(pencil, u_dual - exact):.3e}")

# with every eigenvector in the space, both are exact
small = make_fd_laplacian_1d(4)
full = PoleSet.from_snapshots([np.inf, 1.0, 50.0, 400.0])
bb = np.ones(4)
print("full space, primal:", m_norm(small, extract(build_basis(small, bb, full), f) - solve_oracle(small, bb, s).solution))
print("full space, dual:  ", m_norm(small, dual_rbm(small, bb, full, s) - solve_oracle(small, bb, s).solution))
