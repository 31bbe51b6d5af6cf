"""
Exponential convergence with Zolotarev poles
============================================

Solve L^s u = b for the five-point Laplacian on a 31 x 31 interior grid and
watch the Rayleigh-Ritz error fall like exp(-C* k), with C* fixed by the
ratio of the extreme eigenvalues alone.
"""

import math

import numpy as np

from fracrkm import specfun
from fracrkm.cli import fit_rate
from fracrkm.operator import make_fd_laplacian_2d, m_norm, spectral_interval
from fracrkm.schemes import solve_oracle, solve_rkm, zolotarev_error_bound, zolotarev_snapshots

# the pencil (K, M) with M = I; the extreme eigenvalues come from Lanczos
pencil = make_fd_laplacian_2d(31)
b = np.ones(pencil.n)
interval = spectral_interval(pencil)
print(f"n = {pencil.n}, spectrum inside [{interval.lambda_min:.4f}, {interval.lambda_max:.2f}]")

# the guaranteed rate depends on lambda_1 / lambda_n only
c_star = specfun.zolotarev_rate(interval.lambda_min / interval.lambda_max)
print(f"C* = {c_star:.5f}")

# errors against the dense eigendecomposition, next to the a priori bound
bnorm = m_norm(pencil, b)
for s in (0.2, 0.5, 0.8):
    exact = solve_oracle(pencil, b, s).solution
    ks = list(range(2, 21, 2))
    errs = []
    print(f"\ns = {s}")
    print("   k      error      bound")
    for k in ks:
        u = solve_rkm(pencil, b, s, zolotarev_snapshots(k, interval)).solution
        errs.append(m_norm(pencil, u - exact))
        print(f"  {k:2d}  {errs[-1]:.3e}  {zolotarev_error_bound(s, k, interval, bnorm):.3e}")
    fit = fit_rate(ks, errs)
    print(f"fitted rate {fit.rate:.3f} (C* = {c_star:.3f}), fit window k = {fit.k_window}")

# the snapshots themselves: log-symmetric about sqrt(lambda_1 lambda_n)
snaps = zolotarev_snapshots(6, interval).snapshots[1:]
print("\nk = 6 snapshots:", " ".join(f"{t:.4g}" for t in snaps))
print(f"geometric mean {math.exp(np.mean(np.log(snaps))):.4g}, "
      f"sqrt(lambda_1 lambda_n) {math.sqrt(interval.lambda_min * interval.lambda_max):.4g}")
