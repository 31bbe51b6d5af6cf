"""Acceptance criteria, one test per criterion at the stated tolerance.

Each test records a one-line PASS/FAIL summary that is printed in the
terminal summary under "acceptance criteria".
"""

import math
import time

import numpy as np
import pytest
import scipy.integrate as si
import scipy.linalg as sla
import scipy.special as ss

from conftest import random_spd, report_criterion
from fracrkm import specfun
from fracrkm.cli import fit_rate
from fracrkm.krylov import PoleSet, build_basis, dual_rbm, extract, rbm_resolvent, spectral_interpolant
from fracrkm.operator import (
    OperatorPencil,
    fd_eigenvalues_1d,
    make_fd_laplacian_1d,
    make_fd_laplacian_2d,
    shifted_solve,
    spectral_interval,
)
from fracrkm.rational import brasil_best_approx, poles, to_partial_fractions
from fracrkm.schemes import (
    bura_poles,
    greedy_snapshots,
    rbm_error_bound,
    sinc_grid,
    solve_direct,
    solve_gauss_rbm,
    solve_oracle,
    solve_rkm,
    solve_sinc_rbm,
    zolotarev_error_bound,
    zolotarev_snapshots,
)

S_VALUES = (0.2, 0.5, 0.8)


def mnorm(M, v):
    return math.sqrt(v @ (M @ v))


def pencil_with_spectrum(rng, lam):
    """Dense pencil with L = V diag(lam) V^{-1}: K = V^{-T} diag(lam) V^{-1}, M = V^{-T} V^{-1}.

    V = Q D with Q orthogonal and D in [0.5, 2], so cond(M) <= 16.
    """
    n = len(lam)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    V = Q * rng.uniform(0.5, 2.0, n)
    Vi = np.linalg.inv(V)
    K = Vi.T @ (np.asarray(lam)[:, None] * Vi)
    M = Vi.T @ Vi
    return OperatorPencil.from_matrices(0.5 * (K + K.T), 0.5 * (M + M.T))


def random_snapshots(rng, k, lo, hi, with_inf=True):
    """k log-uniform snapshots in [lo, hi] at least a factor 1.5 apart."""
    while True:
        t = np.sort(np.exp(rng.uniform(math.log(lo), math.log(hi), k)))
        if k < 2 or np.min(t[1:] / t[:-1]) > 1.5:
            break
    return ([math.inf] if with_inf else []) + t.tolist()


def dense_power(pencil, s, b):
    K, M = pencil.dense()
    lam, U = sla.eigh(K, M)
    return U @ (lam ** (-s) * (U.T @ (M @ b)))


@pytest.fixture(scope="module")
def fd2d():
    p = make_fd_laplacian_2d(31)
    b = np.ones(p.n)
    iv = spectral_interval(p)
    exact = {s: solve_oracle(p, b, s).solution for s in S_VALUES}
    return p, b, iv, exact


def test_criterion_01_rbm_rkm_equivalence():
    """Reduced-basis quadrature of the Balakrishnan integral equals Rayleigh-Ritz extraction."""
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(5, 51))
        K, M = random_spd(rng, n, 1e3), random_spd(rng, n, 10.0)
        pencil = OperatorPencil.from_matrices(K, M)
        b = rng.standard_normal(n)
        s = float(rng.uniform(0.1, 0.9))
        snaps = random_snapshots(rng, int(rng.integers(0, 7)), 0.1, 1e4)
        # Galerkin surrogate w(t) = V (t + A)^{-1} V^T M b, V from Cholesky and QR
        cols = [b if t == math.inf else np.linalg.solve(K + t * M, M @ b) for t in snaps]
        R = np.linalg.cholesky(M)
        Q, _ = np.linalg.qr(R.T @ np.column_stack(cols))
        V = np.linalg.solve(R.T, Q)
        A = V.T @ K @ V
        c = V.T @ (M @ b)
        I = np.eye(len(c))

        def integrand(y):
            # t = e^y; both branches avoid overflow of e^y
            if y > 0:
                v = math.exp(-s * y) * np.linalg.solve(I + math.exp(-y) * A, c)
            else:
                v = math.exp((1 - s) * y) * np.linalg.solve(math.exp(y) * I + A, c)
            return math.sin(math.pi * s) / math.pi * v

        coef, _ = si.quad_vec(integrand, -np.inf, np.inf, epsabs=0, epsrel=1e-13, limit=2000)
        u_rbm = V @ coef
        u_rkm = extract(build_basis(pencil, b, PoleSet.from_snapshots(snaps)), lambda z: z ** (-s))
        worst = max(worst, mnorm(M, u_rbm - u_rkm) / mnorm(M, u_rkm))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 10
    report_criterion(1, ok, f"RBM vs RKM max rel M-error {worst:.2e} (tol 1e-10), {elapsed:.1f} s (< 10 s)")
    assert worst <= 1e-10
    assert elapsed < 10


def test_criterion_02_spectral_interpolant():
    """extract(f) equals r(L) b with r applied through its partial fraction form."""
    rng = np.random.default_rng(2)
    n = 100
    K, M = random_spd(rng, n, 1e3), random_spd(rng, n, 10.0)
    pencil = OperatorPencil.from_matrices(K, M)
    b = rng.standard_normal(n)
    bn = mnorm(M, b)
    worst = 0.0
    for s in S_VALUES:
        for k in range(0, 9):
            snaps = random_snapshots(rng, k, 0.5, 5e3)
            basis = build_basis(pencil, b, PoleSet.from_snapshots(snaps))
            f = lambda z: z ** (-s)
            r = spectral_interpolant(basis, f)
            pf = to_partial_fractions(r, pole_list=basis.poles.finite)
            u_r = pf.c0 * b + sum(c * shifted_solve(pencil, d, b) for c, d in pf.terms)
            worst = max(worst, mnorm(M, extract(basis, f) - u_r) / bn)
    ok = worst <= 1e-9
    report_criterion(2, ok, f"||extract(f) - r(L)b||_M / ||b||_M max {worst:.2e} (tol 1e-9), n=100, k<=8")
    assert ok


def test_criterion_03_dual_identity():
    """Dual scheme equals L^{-1} times extraction of z^{s-2} for L^{-1} from L^{-1}b, poles -1/t_j."""
    rng = np.random.default_rng(3)
    worst = 0.0
    for trial in range(12):
        n = int(rng.integers(6, 41))
        K, M = random_spd(rng, n, 1e3), random_spd(rng, n, 10.0)
        pencil = OperatorPencil.from_matrices(K, M)
        b = rng.standard_normal(n)
        s = S_VALUES[trial % 3]
        snaps = random_snapshots(rng, int(rng.integers(1, 6)), 0.5, 5e3)
        u_dual = dual_rbm(pencil, b, snaps, s)
        # pencil of L^{-1} = K^{-1} M: stiffness M K^{-1} M, same mass
        Kinv = M @ np.linalg.solve(K, M)
        Lb = np.linalg.solve(K, M @ b)
        # (L^{-1} + 1/t)^{-1} L^{-1} b, with t = inf giving b; dense solves and QR, no library code
        cols = [b if t == math.inf else np.linalg.solve(Kinv + M / t, M @ Lb) for t in snaps]
        R = np.linalg.cholesky(M)
        Q, _ = np.linalg.qr(R.T @ np.column_stack(cols))
        V = np.linalg.solve(R.T, Q)
        mu, Y = sla.eigh(V.T @ Kinv @ V)
        rkm = V @ (Y @ (mu ** (s - 2) * (Y.T @ (V.T @ (M @ Lb)))))
        want = np.linalg.solve(K, M @ rkm)
        worst = max(worst, mnorm(M, u_dual - want) / mnorm(M, want))
    ok = worst <= 1e-9
    report_criterion(3, ok, f"dual vs L^-1 RKM(L^-1, z^(s-2)) max rel error {worst:.2e} (tol 1e-9)")
    assert ok


def test_criterion_04_direct_error_bound():
    """Direct partial-fraction error never exceeds ||b||_M times the best approximation error."""
    rng = np.random.default_rng(4)
    violations, worst_ratio = 0, 0.0
    for _ in range(50):
        s = float(rng.uniform(0.1, 0.9))
        k = int(rng.integers(1, 9))
        lo = float(np.exp(rng.uniform(math.log(0.5), math.log(20))))
        hi = lo * float(np.exp(rng.uniform(math.log(5), math.log(1e4))))
        n = int(rng.integers(8, 41))
        lam = np.concatenate([[lo, hi], np.exp(rng.uniform(math.log(lo), math.log(hi), n - 2))])
        pencil = pencil_with_spectrum(rng, lam)
        b = rng.standard_normal(n)
        res = solve_direct(pencil, b, s, k, interval=(lo, hi))
        M = pencil.M.toarray() if hasattr(pencil.M, "toarray") else np.asarray(pencil.M)
        bn = mnorm(M, b)
        err = mnorm(M, res.solution - dense_power(pencil, s, b))
        bound = bn * res.metadata["max_error"]
        if err > bound:
            violations += 1
        worst_ratio = max(worst_ratio, err / bound)
    ok = violations == 0
    report_criterion(4, ok, f"{violations} violations in 50 cells, max error/bound {worst_ratio:.3f}")
    assert ok


def test_criterion_05_zolotarev_convergence(fd2d):
    p, b, iv, exact = fd2d
    t0 = time.perf_counter()
    lo, hi = iv
    c_star = specfun.zolotarev_rate(lo / hi)
    bn = math.sqrt(b @ (p.M @ b))
    fails, rates = [], {}
    for s in S_VALUES:
        ks = list(range(2, 26))
        errs = []
        for k in ks:
            u = solve_rkm(p, b, s, zolotarev_snapshots(k, iv)).solution
            e = math.sqrt((u - exact[s]) @ (p.M @ (u - exact[s])))
            errs.append(e)
            if e > zolotarev_error_bound(s, k, iv, bn):
                fails.append((s, k))
        rates[s] = fit_rate(ks, errs).rate
    elapsed = time.perf_counter() - t0
    rate_ok = all(r >= c_star for r in rates.values())
    ok = not fails and rate_ok and elapsed < 120
    shown = ", ".join(f"s={s}: {r:.3f}" for s, r in rates.items())
    report_criterion(5, ok, f"bound violations {fails}, rates {shown} vs C*={c_star:.4f}, {elapsed:.1f} s (< 120 s)")
    assert not fails
    assert rate_ok
    assert elapsed < 120


def relative_error(p, u, exact):
    d = u - exact
    return math.sqrt(d @ (p.M @ d)) / math.sqrt(exact @ (p.M @ exact))


def test_criterion_06_bura_quality(fd2d):
    p, b, iv, exact = fd2d
    s = 0.5
    e_bura = relative_error(p, solve_rkm(p, b, s, bura_poles(s, iv, 10), "bura").solution, exact[s])
    e_zolo = relative_error(p, solve_rkm(p, b, s, zolotarev_snapshots(10, iv)).solution, exact[s])
    e_greedy = relative_error(p, solve_rkm(p, b, s, greedy_snapshots(p, b, k=10), "greedy").solution, exact[s])
    order_ok = e_bura <= e_zolo and e_bura <= e_greedy
    ks = range(3, 16)
    errs = np.array([relative_error(p, solve_rkm(p, b, s, bura_poles(s, iv, k), "bura").solution, exact[s]) for k in ks])
    env = np.exp(-2 * np.pi * np.sqrt(np.array(ks) * s))
    c_fit = errs[0] / env[0]
    env_ok = bool(np.all(errs <= c_fit * env * (1 + 1e-12)))
    ok = order_ok and env_ok
    report_criterion(
        6, ok,
        f"k=10: bura {e_bura:.2e} <= zolo {e_zolo:.2e}, greedy {e_greedy:.2e}; "
        f"envelope C={c_fit:.3g} held for k=3..15: {env_ok}",
    )
    assert order_ok
    assert env_ok


def test_criterion_07_sinc_greedy_gauss(fd2d):
    p, b, iv, exact = fd2d
    bn = math.sqrt(b @ (p.M @ b))
    grid = sinc_grid(0.15, 0.2, 0.8)
    picks = greedy_snapshots(p, b, k=12).snapshots
    worst = 0.0
    for k in (4, 8, 12):
        snaps = picks[: k + 1]
        for s in S_VALUES:
            u_g = solve_rkm(p, b, s, PoleSet.from_snapshots(snaps), "greedy").solution
            u_s = solve_sinc_rbm(p, b, s, snaps, grid).solution
            worst = max(worst, math.sqrt((u_g - u_s) @ (p.M @ (u_g - u_s))) / bn)
    snaps = picks[:9]
    u_g = solve_rkm(p, b, 0.5, PoleSet.from_snapshots(snaps), "greedy").solution
    u_s = solve_sinc_rbm(p, b, 0.5, snaps, grid).solution
    u_q = solve_gauss_rbm(p, b, 0.5, snaps, snaps, k_star=0.15).solution
    triple = max(
        math.sqrt(d @ (p.M @ d)) / bn for d in (u_g - u_s, u_g - u_q, u_s - u_q)
    )
    ok = worst <= 1e-9 and triple <= 1e-8
    report_criterion(7, ok, f"sinc vs greedy max {worst:.2e} (tol 1e-9); greedy/sinc/gauss at s=0.5 {triple:.2e} (tol 1e-8)")
    assert worst <= 1e-9
    assert triple <= 1e-8


def test_criterion_08_reduced_resolvent_bound():
    rng = np.random.default_rng(8)
    violations, worst_ratio = 0, 0.0
    for trial in range(5):
        n = 40
        lo = float(rng.uniform(0.5, 5.0))
        hi = lo * float(10 ** rng.uniform(2, 5))
        lam = np.concatenate([[lo, hi], np.exp(rng.uniform(math.log(lo), math.log(hi), n - 2))])
        pencil = pencil_with_spectrum(rng, lam)
        K, M = pencil.dense()
        b = rng.standard_normal(n)
        bn = mnorm(M, b)
        snaps = zolotarev_snapshots(2 + 2 * trial, (lo, hi)) if trial % 2 == 0 else PoleSet.from_snapshots(
            random_snapshots(rng, 3 + trial, lo, hi)
        )
        basis = build_basis(pencil, b, snaps)
        for t in np.exp(rng.uniform(math.log(1e-3), math.log(1e6), 10)):
            err = mnorm(M, rbm_resolvent(basis, t) - np.linalg.solve(K + t * M, M @ b))
            bound = rbm_error_bound(t, snaps, (lo, hi), bn, n_grid=10_000)
            if err > bound:
                violations += 1
            worst_ratio = max(worst_ratio, err / bound)
    ok = violations == 0
    report_criterion(8, ok, f"{violations} violations over 50 parameters, max error/bound {worst_ratio:.3f}")
    assert ok


def agm_oracle(k):
    a, g = 1.0, math.sqrt((1 - k) * (1 + k))
    for _ in range(60):
        a, g = 0.5 * (a + g), math.sqrt(a * g)
    return math.pi / (2 * a)


def test_criterion_09_special_functions():
    checks = {}
    checks["K(0) = pi/2"] = specfun.ellip_K(0.0) == math.pi / 2
    for k in (1 / math.sqrt(2), 0.5):
        got = specfun.ellip_K(k)
        checks[f"K({k:.4f}) AGM"] = abs(got - agm_oracle(k)) <= 1e-13 * got
        checks[f"K({k:.4f}) scipy"] = abs(got - ss.ellipk(k * k)) <= 1e-13 * got
    half = 0.0
    for k in (0.1, 0.5, 0.9, 0.999):
        kp = math.sqrt(1 - k * k)
        half = max(half, abs(specfun.jacobi_dn(specfun.ellip_K(k) / 2, k) - math.sqrt(kp)))
    checks["dn(K/2) = sqrt(k')"] = half <= 1e-10
    moment = 0.0
    for m in range(1, 31):
        rule = specfun.gauss_laguerre(m)
        for j in range(2 * m):
            moment = max(moment, abs(np.sum(rule.weights * rule.nodes**j) / math.factorial(j) - 1))
    checks["Gauss-Laguerre moments"] = moment <= 1e-9
    ok = all(checks.values())
    failed = [name for name, v in checks.items() if not v]
    report_criterion(9, ok, f"dn half-argument {half:.1e}, Laguerre moments {moment:.1e}, failed: {failed}")
    assert ok


def test_criterion_10_brasil():
    const = brasil_best_approx(0.5, (1.0, 16.0), 0)
    closed = const.max_error == pytest.approx(0.375, rel=1e-15) and const.approximant(2.0) == pytest.approx(0.625, rel=1e-15)
    worst_dev, slowest = 0.0, 0.0
    decreasing, negative = True, True
    for s in S_VALUES:
        errs = []
        for k in range(0, 13):
            t0 = time.perf_counter()
            rep = brasil_best_approx(s, (1.0, 1e4), k)
            slowest = max(slowest, time.perf_counter() - t0)
            errs.append(rep.max_error)
            worst_dev = max(worst_dev, rep.equioscillation_deviation)
            if k > 0:
                d = poles(rep.approximant)
                negative &= bool(len(d) == k and np.all(d < 0))
        decreasing &= bool(np.all(np.diff(errs) < 0))
    ok = closed and worst_dev <= 1e-3 and decreasing and negative and slowest < 5
    report_criterion(
        10, ok,
        f"closed form {closed}, max deviation {worst_dev:.1e} (<= 1e-3), decreasing {decreasing}, "
        f"negative poles {negative}, slowest {slowest:.2f} s (< 5 s)",
    )
    assert closed and worst_dev <= 1e-3 and decreasing and negative and slowest < 5


def test_criterion_11_oracle():
    worst = 0.0
    for n in (1, 3, 17, 64, 200):
        p = make_fd_laplacian_1d(n)
        b = np.sin(np.arange(1, n + 1)) + 1.0
        h = 1.0 / (n + 1)
        j = np.arange(1, n + 1)
        U = math.sqrt(2.0 / (n + 1)) * np.sin(np.outer(j, j) * np.pi * h)
        for s in S_VALUES:
            want = U @ (fd_eigenvalues_1d(n) ** (-s) * (U.T @ b))
            got = solve_oracle(p, b, s).solution
            worst = max(worst, np.linalg.norm(got - want) / np.linalg.norm(want))
    rng = np.random.default_rng(11)
    p = OperatorPencil.from_matrices(random_spd(rng, 60, 1e3), random_spd(rng, 60, 10.0))
    b = rng.standard_normal(60)
    lhs = solve_oracle(p, solve_oracle(p, b, 0.4).solution, 0.3).solution
    rhs = solve_oracle(p, b, 0.7).solution
    semi = np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs)
    ok = worst <= 1e-10 and semi <= 1e-10
    report_criterion(11, ok, f"Toeplitz max rel {worst:.1e}, semigroup (0.3, 0.4) {semi:.1e} (tol 1e-10)")
    assert ok
