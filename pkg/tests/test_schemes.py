"""Snapshot generators and end-to-end solvers."""

import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from conftest import diag_pencil, random_pencil
from fracrkm.errors import DegeneracyError, InvalidArgument, PreconditionError, ResourceLimit
from fracrkm.krylov import PoleSet, build_basis, rbm_resolvent
from fracrkm.operator import NEG_INF, SpectralInterval, make_fd_laplacian_1d, shifted_solve
from fracrkm.rational import BarycentricRational, brasil_best_approx, interpolate
from fracrkm.schemes import (
    MethodResult,
    best_approx,
    bura_poles,
    gauss_sizes,
    greedy_grid,
    greedy_snapshots,
    rbm_error_bound,
    sinc_grid,
    sinc_weights,
    solve_direct,
    solve_dual,
    solve_gauss_rbm,
    solve_oracle,
    solve_rkm,
    solve_sinc_rbm,
    theta_sup,
    zolotarev_error_bound,
    zolotarev_snapshots,
)
from fracrkm.specfun import zolotarev_rate


def toeplitz_power(n, s, b):
    """L^{-s} b for the 1D finite-difference Laplacian from its closed-form eigenpairs."""
    h = 1.0 / (n + 1)
    j = np.arange(1, n + 1)
    lam = 4.0 / h**2 * np.sin(j * np.pi * h / 2) ** 2
    U = math.sqrt(2.0 / (n + 1)) * np.sin(np.outer(np.arange(1, n + 1), j) * np.pi * h)
    return U @ (lam**-s * (U.T @ b))


def mnorm(pencil, v):
    return math.sqrt(v @ (pencil.M @ v))


def dense_power(pencil, s, b):
    K, M = pencil.dense()
    lam, U = sla.eigh(K, M)
    return U @ (lam**-s * (U.T @ (M @ b)))


class TestZolotarev:
    def test_k1_geometric_mean(self):
        ps = zolotarev_snapshots(1, (1.0, 16.0))
        assert ps.poles[0] is NEG_INF
        assert ps.snapshots[1] == pytest.approx(4.0, rel=1e-14)

    @pytest.mark.parametrize("lo, hi", [(19.74, 560718.48), (3.0, 7.0), (1.0, 1e8)])
    def test_k1_identity_general(self, lo, hi):
        assert zolotarev_snapshots(1, (lo, hi)).snapshots[1] == pytest.approx(math.sqrt(lo * hi), rel=1e-12)

    def test_monotone_inside_interval(self):
        lo, hi = 19.74, 560718.48
        t = np.array(zolotarev_snapshots(4, (lo, hi)).snapshots[1:])
        assert np.all(np.diff(t) > 0) and t[0] >= lo and t[-1] <= hi
        # interlacing is geometric: log-ratios are symmetric about the centre
        r = np.log(t / math.sqrt(lo * hi))
        np.testing.assert_allclose(r, -r[::-1], atol=1e-10)

    def test_near_degenerate_interval(self):
        t = np.array(zolotarev_snapshots(5, (1.0 - 1e-9, 1.0)).snapshots[1:])
        np.testing.assert_allclose(t, 1.0, rtol=1e-8)

    def test_degenerate(self):
        with pytest.raises(DegeneracyError):
            zolotarev_snapshots(2, (3.0, 3.0))


class TestSincGrid:
    def test_symmetric_exponent(self):
        g = sinc_grid(0.15, 0.5, 0.5)
        assert g.M_s == g.N_s == 878

    def test_default_range(self):
        g = sinc_grid(0.15, 0.2, 0.8)
        assert g.M_s == 2194 and g.N_s == 2194 and g.size == 4389

    def test_coarse(self):
        g = sinc_grid(math.pi, 0.5, 0.5)
        assert g.M_s == g.N_s == 2

    @pytest.mark.parametrize("args", [(0.0, 0.5, 0.5), (0.15, 0.0, 0.5), (0.15, 0.6, 0.5), (0.15, 0.5, 1.0)])
    def test_invalid(self, args):
        with pytest.raises(InvalidArgument):
            sinc_grid(*args)

    @pytest.mark.parametrize("s", [0.2, 0.5, 0.8])
    @pytest.mark.parametrize("lam", [1.0, 19.7, 8172.0, 5e5])
    def test_scalar_quadrature(self, s, lam):
        ts, w = sinc_weights(sinc_grid(0.15, 0.2, 0.8), s)
        assert np.sum(w / (ts + lam)) == pytest.approx(lam**-s, rel=1e-9)

    def test_scalar_solver(self):
        p = diag_pencil([7.0])
        u = solve_sinc_rbm(p, np.array([2.0]), 0.3, [math.inf], sinc_grid(0.15, 0.2, 0.8)).solution
        assert u[0] == pytest.approx(2.0 * 7.0**-0.3, rel=1e-9)

    def test_boundary_exponent_full_space(self, rng):
        p = random_pencil(rng, 4, cond=100)
        b = rng.standard_normal(4)
        u = solve_sinc_rbm(p, b, 0.2, [math.inf, 1.0, 10.0, 100.0], sinc_grid(0.15, 0.2, 0.8)).solution
        want = dense_power(p, 0.2, b)
        assert mnorm(p, u - want) <= 1e-9 * mnorm(p, b)

    def test_outside_range(self):
        with pytest.raises(PreconditionError, match="outside the sinc grid range"):
            solve_sinc_rbm(diag_pencil([1, 4]), np.ones(2), 0.9, [math.inf], sinc_grid(0.15, 0.2, 0.8))


class TestGreedy:
    def test_singleton_grid(self):
        ps = greedy_snapshots(diag_pencil([1, 4, 9]), np.ones(3), [3.5], k=1)
        assert ps.snapshots == (math.inf, 3.5)

    def test_eigenvector(self):
        ps = greedy_snapshots(diag_pencil([1, 4, 9]), np.array([0.0, 1.0, 0.0]), [0.5, 2.0, 30.0], k=2)
        assert ps.snapshots == (math.inf,)

    def test_brute_force_two_candidates(self):
        L = np.array([1.0, 4.0])
        b = np.ones(2) / math.sqrt(2)
        mu = b @ (L * b)  # 1x1 projection of L onto span{b}

        def residual(t):
            w = b / (t + mu)
            return np.linalg.norm((t + L) * w - b)

        want = max([0.5, 2.0], key=residual)
        ps = greedy_snapshots(diag_pencil(L), b, [0.5, 2.0], k=1)
        assert ps.snapshots == (math.inf, want)

    def test_ties_prefer_smaller(self):
        # on span{b} for an orthogonal pair the residual is symmetric in the two candidates
        p = diag_pencil([1.0, 1.0 + 1e-30, 9.0])
        b = np.array([1.0, 0.0, 0.0])
        assert greedy_snapshots(p, b, [2.0, 5.0], k=1).snapshots == (math.inf,)

    def test_default_grid_range(self):
        g = greedy_grid()
        assert g.size == 2000
        assert g[0] == pytest.approx(math.exp(-2194 * 0.15)) and g[-1] == pytest.approx(math.exp(2194 * 0.15))

    def test_residual_decreases(self, rng):
        p = make_fd_laplacian_1d(60)
        b = rng.standard_normal(60)
        xi = np.geomspace(1e-2, 1e6, 300)
        ps = greedy_snapshots(p, b, xi, k=8)
        assert len(ps) == 9 and ps.has_infinity
        errs = [mnorm(p, solve_rkm(p, b, 0.5, PoleSet(ps.poles[: j + 1])).solution - dense_power(p, 0.5, b))
                for j in range(len(ps))]
        assert errs[-1] < 1e-3 * errs[0]

    def test_bad_k(self):
        with pytest.raises(InvalidArgument):
            greedy_snapshots(diag_pencil([1, 4]), np.ones(2), [1.0], k=2)


class TestRkm:
    def test_full_space(self, rng):
        p = random_pencil(rng, 6)
        b = rng.standard_normal(6)
        u = solve_rkm(p, b, 0.4, PoleSet.from_snapshots([math.inf, 1, 3, 10, 30, 100])).solution
        want = dense_power(p, 0.4, b)
        assert mnorm(p, u - want) <= 1e-11 * mnorm(p, want)

    def test_two_dimensional(self):
        b = np.array([1.0, 1.0])
        u = solve_rkm(diag_pencil([1, 4]), b, 0.5, [NEG_INF, -1.0]).solution
        np.testing.assert_allclose(u, [1.0, 0.5], rtol=1e-12)

    def test_metadata(self):
        r = solve_rkm(diag_pencil([1, 4]), np.ones(2), 0.5, [NEG_INF, -1.0], method="zolo")
        assert r.method == "zolo" and r.k == 1 and r.metadata["snapshots"] == ["inf", 1.0]
        assert {"time_basis", "time_extract"} <= set(r.metadata)

    def test_unknown_method(self):
        with pytest.raises(InvalidArgument):
            MethodResult(np.zeros(1), "jacobi", 1, 0.5, 0.0)

    @pytest.mark.parametrize("s", [0.2, 0.5, 0.8])
    def test_zolotarev_bound_fd1d(self, s):
        p = make_fd_laplacian_1d(200)
        b = np.ones(200)
        lam = p.eigh().values
        iv = SpectralInterval(lam[0], lam[-1])
        want = toeplitz_power(200, s, b)
        for k in (2, 5, 9):
            u = solve_rkm(p, b, s, zolotarev_snapshots(k, iv)).solution
            assert mnorm(p, u - want) <= zolotarev_error_bound(s, k, iv, mnorm(p, b))

    def test_bound_formula(self):
        iv = SpectralInterval(2.0, 50.0)
        c = zolotarev_rate(2.0 / 50.0)
        assert zolotarev_error_bound(0.5, 3, iv, 2.0) == pytest.approx(4 * 2.0**-0.5 * math.exp(-3 * c) * 2.0)


class TestGauss:
    def test_sizes(self):
        assert gauss_sizes(0.5, 0.15) == (220, 220)
        m_minus, m_plus = gauss_sizes(0.3, 0.15)
        assert m_plus == math.ceil(math.pi**2 / (4 * 0.3 * 0.0225))
        assert m_minus == math.ceil(math.pi**2 / (4 * 0.7 * 0.0225))

    @pytest.mark.parametrize("s", [0.3, 0.5, 0.7])
    @pytest.mark.parametrize("lam", [1.0, 19.7, 8172.0])
    def test_scalar(self, s, lam):
        u = solve_gauss_rbm(diag_pencil([lam]), np.array([1.0]), s, [math.inf], [math.inf]).solution
        assert u[0] == pytest.approx(lam**-s, rel=1.5e-9)

    def test_scalar_convergence(self):
        errs = []
        for k_star in (0.6, 0.4, 0.25, 0.15):
            u = solve_gauss_rbm(diag_pencil([50.0]), np.array([1.0]), 0.5, [math.inf], [math.inf], k_star).solution
            errs.append(abs(u[0] - 50.0**-0.5))
        assert all(e2 <= e1 for e1, e2 in zip(errs, errs[1:])) and errs[-1] < 1e-9

    def test_symmetry_at_half(self):
        # L and its reflection c^2 L^{-1} share the spectrum; s = 1/2 maps one sum onto the other
        lam = np.array([2.0, 8.0])
        p = diag_pencil(lam)
        b = np.array([1.0, 1.0])
        u = solve_gauss_rbm(p, b, 0.5, [math.inf, 1.0], [math.inf, 1.0]).solution
        np.testing.assert_allclose(u * np.sqrt(lam), [1.0, 1.0], rtol=1e-9)
        np.testing.assert_allclose(u[0] * 2.0, u[1] * 4.0, rtol=1e-9)

    def test_mismatched_t0(self):
        with pytest.raises(PreconditionError):
            solve_gauss_rbm(diag_pencil([1, 4]), np.ones(2), 0.5, [math.inf], [1.0])

    def test_rule_size_limit(self):
        with pytest.raises(InvalidArgument):
            solve_gauss_rbm(diag_pencil([1, 4]), np.ones(2), 0.2, [math.inf], [math.inf])


class TestDirect:
    def test_constant(self):
        b = np.array([1.0, -2.0])
        r = solve_direct(diag_pencil([1, 16]), b, 0.5, 0, interval=(1.0, 16.0))
        np.testing.assert_allclose(r.solution, 0.625 * b, rtol=1e-15)
        exact = np.array([1.0, 0.25]) * b
        assert np.all(np.abs(r.solution - exact) <= 0.375 * np.abs(b) + 1e-15)

    def test_small_max_error(self, rng):
        p = random_pencil(rng, 30, cond=1e3)
        b = rng.standard_normal(30)
        r = solve_direct(p, b, 0.5, 10)
        assert r.metadata["max_error"] <= 1e-8
        assert mnorm(p, r.solution - dense_power(p, 0.5, b)) <= 1e-8 * mnorm(p, b)

    def test_componentwise_partial_fraction(self):
        lam = np.array([1.0, 3.0, 10.0])
        r = interpolate(lambda z: 0.5 + 2.0 / (z + 1), [1.0, 2.0, 5.0])
        b = np.array([1.0, 2.0, -1.0])
        u = solve_direct(diag_pencil(lam), b, 0.5, 1, approximant=r).solution
        np.testing.assert_allclose(u, r(lam) * b, rtol=1e-13)

    @given(st.floats(0.1, 0.9), st.integers(0, 8), st.integers(0, 2**32 - 1))
    def test_direct_error_below_best_error(self, s, k, seed):
        rng = np.random.default_rng(seed)
        p = random_pencil(rng, 20, cond=float(rng.uniform(10, 1e4)))
        b = rng.standard_normal(20)
        r = solve_direct(p, b, s, k)
        err = mnorm(p, r.solution - dense_power(p, s, b))
        assert err <= mnorm(p, b) * r.metadata["max_error"] * (1 + 1e-8) + 1e-13 * mnorm(p, b)

    def test_degree_reduction_at_floor(self):
        rep = best_approx(0.5, (19.7, 8172.0), 20)
        assert rep.k < 20 and rep.floor_limited


class TestBura:
    def test_k0(self):
        assert bura_poles(0.5, (1.0, 16.0), 0) == PoleSet((NEG_INF,))

    def test_k1_against_brasil_pole(self):
        ps = bura_poles(0.5, (1.0, 16.0), 1)
        assert len(ps) == 2 and ps.finite[0] < 0

    def test_beats_zolotarev(self):
        p = make_fd_laplacian_1d(200)
        b = np.ones(200)
        lam = p.eigh().values
        iv = SpectralInterval(lam[0], lam[-1])
        want = toeplitz_power(200, 0.5, b)
        e_bura = mnorm(p, solve_rkm(p, b, 0.5, bura_poles(0.5, iv, 7)).solution - want)
        e_zolo = mnorm(p, solve_rkm(p, b, 0.5, zolotarev_snapshots(7, iv)).solution - want)
        assert e_bura <= e_zolo


class TestOracle:
    def test_diagonal(self):
        np.testing.assert_allclose(solve_oracle(diag_pencil([1, 16]), np.ones(2), 0.5).solution, [1, 0.25], rtol=1e-15)

    def test_endpoints(self, rng):
        p = random_pencil(rng, 10)
        b = rng.standard_normal(10)
        np.testing.assert_allclose(solve_oracle(p, b, 0.0).solution, b, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(solve_oracle(p, b, 1.0).solution, shifted_solve(p, 0.0, b), rtol=1e-9)

    def test_toeplitz(self):
        b = np.arange(1.0, 6.0)
        np.testing.assert_allclose(solve_oracle(make_fd_laplacian_1d(5), b, 0.3).solution, toeplitz_power(5, 0.3, b), rtol=1e-12)

    def test_cap(self):
        p = make_fd_laplacian_1d(30)
        p._memo.clear()
        with pytest.raises(ResourceLimit):
            p.eigh(cap=10)


class TestDual:
    def test_solver(self):
        r = solve_dual(diag_pencil([1, 4]), np.array([1.0, 2.0]), 0.5, [math.inf, 1.0])
        np.testing.assert_allclose(r.solution, [1.0, 1.0], rtol=1e-12)
        assert r.method == "dual"


class TestRbmBound:
    def test_theta_sup_definition(self):
        z = np.geomspace(1, 100, 10_000)
        want = np.abs((z - 10) / (z + 10) * (z - 50) / (z + 50)).max()
        assert theta_sup([math.inf, 10.0, 50.0], (1.0, 100.0)) == pytest.approx(want)

    def test_bound_on_dense_instance(self, rng):
        p = random_pencil(rng, 40)
        b = rng.standard_normal(40)
        lam = sla.eigh(*p.dense(), eigvals_only=True)
        iv = SpectralInterval(lam[0], lam[-1])
        snaps = PoleSet.from_snapshots([math.inf, *np.geomspace(lam[0], lam[-1], 5)])
        basis = build_basis(p, b, snaps)
        for t in np.geomspace(1e-3, 1e5, 12):
            err = mnorm(p, rbm_resolvent(basis, t) - shifted_solve(p, -t, b))
            assert err <= rbm_error_bound(t, snaps, iv, mnorm(p, b))
