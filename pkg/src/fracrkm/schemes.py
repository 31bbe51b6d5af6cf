"""Snapshot generators and end-to-end solvers for u = L^{-s} b.

Every solver returns a :class:`MethodResult`.  The projection-based ones
(``zolo``, ``greedy``, ``bura``, ``sinc``, ``gauss``, ``dual``) differ only in
where the snapshots come from and how the reduced problem is evaluated;
``direct`` sums shifted solves from a partial fraction expansion and
``oracle`` diagonalizes the full pencil.
"""

from __future__ import annotations

import functools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import krylov, rational, specfun
from .errors import DegeneracyError, InvalidArgument, PreconditionError, ValidationError
from .krylov import PoleSet
from .operator import (
    NEG_INF,
    OperatorPencil,
    SpectralInterval,
    m_norm,
    shifted_solve,
    spectral_interval,
)

__all__ = [
    "METHODS",
    "SincGrid",
    "MethodResult",
    "zolotarev_snapshots",
    "sinc_grid",
    "greedy_grid",
    "greedy_snapshots",
    "best_approx",
    "bura_poles",
    "solve_rkm",
    "solve_sinc_rbm",
    "solve_gauss_rbm",
    "solve_dual",
    "solve_direct",
    "solve_oracle",
    "zolotarev_error_bound",
    "theta_sup",
    "rbm_error_bound",
]

METHODS = ("zolo", "greedy", "bura", "sinc", "gauss", "direct", "dual", "oracle")
GREEDY_STOP = 1e-14
GREEDY_MAX_REJECTS = 10


@dataclass(frozen=True)
class SincGrid:
    """Truncated sinc nodes y_j = j k_star, j = -M_s .. N_s.

    M_s is governed by the largest exponent and N_s by the smallest one the
    grid is meant to serve.
    """

    k_star: float
    M_s: int
    N_s: int
    s_min: float
    s_max: float

    @property
    def nodes(self) -> np.ndarray:
        return self.k_star * np.arange(-self.M_s, self.N_s + 1, dtype=float)

    @property
    def size(self) -> int:
        return self.M_s + self.N_s + 1

    def covers(self, s: float) -> bool:
        return self.s_min <= s <= self.s_max


@dataclass
class MethodResult:
    solution: np.ndarray
    method: str
    k: int
    s: float
    wall_time: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidArgument(f"unknown method {self.method!r}")


def _check_s(s: float, closed: bool = False) -> float:
    s = float(s)
    ok = 0.0 <= s <= 1.0 if closed else 0.0 < s < 1.0
    if not ok:
        raise InvalidArgument(f"exponent s must lie in (0, 1), got {s!r}")
    return s


def _as_interval(interval) -> SpectralInterval:
    return interval if isinstance(interval, SpectralInterval) else SpectralInterval(*interval)


def _snapshot_list(poles: PoleSet) -> list:
    return ["inf" if t == math.inf else t for t in poles.snapshots]


# ---------------------------------------------------------------------------
# snapshot generators


def zolotarev_snapshots(k: int, interval) -> PoleSet:
    """Scaled Zolotarev points {inf, t_1, ..., t_k} on [lambda_1, lambda_n].

    t_j = lambda_n dn((2(k - j) + 1) K(d') / (2k), d') with d = lambda_1 / lambda_n
    and d' = sqrt(1 - d^2); the finite points increase with j.
    """
    if int(k) != k or k < 1:
        raise InvalidArgument(f"k must be a positive integer, got {k!r}")
    k = int(k)
    lo, hi = _as_interval(interval)
    if lo >= hi:
        raise DegeneracyError(f"spectral interval [{lo}, {hi}] is degenerate")
    delta = lo / hi
    dprime = math.sqrt((1.0 - delta) * (1.0 + delta))
    # the complement of d' is d itself; passing it avoids cancellation for small d
    Kp = specfun.ellip_K(dprime, kp=delta)
    u = (2.0 * (k - np.arange(1, k + 1)) + 1.0) / (2.0 * k) * Kp
    t = hi * specfun.jacobi_dn(u, dprime, kp=delta)
    t = np.clip(t, lo, hi)
    return PoleSet((NEG_INF, *(-t)))


def sinc_grid(k_star: float, s_min: float, s_max: float) -> SincGrid:
    k_star = float(k_star)
    if not (k_star > 0 and math.isfinite(k_star)):
        raise InvalidArgument(f"k_star must be positive, got {k_star!r}")
    if not (0.0 < s_min <= s_max < 1.0):
        raise InvalidArgument(f"need 0 < s_min <= s_max < 1, got ({s_min}, {s_max})")
    M = math.ceil(math.pi**2 / ((1.0 - s_max) * k_star**2))
    N = math.ceil(math.pi**2 / (s_min * k_star**2))
    return SincGrid(k_star, M, N, float(s_min), float(s_max))


GREEDY_GRID_SIZE = 2000


def greedy_grid(
    k_star: float = 0.15, s_min: float = 0.2, s_max: float = 0.8, size: int = GREEDY_GRID_SIZE
) -> np.ndarray:
    """Log-spaced training set on [exp(-M k_star), exp(N k_star)].

    The range is very wide (e^{+-329} for the defaults), so the default size
    keeps neighbouring parameters within a factor of about 1.4 of each other.
    """
    g = sinc_grid(k_star, s_min, s_max)
    return np.exp(np.linspace(-g.M_s * k_star, g.N_s * k_star, size))


def _residual_norms(basis: krylov.KrylovBasis, LW: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Exact ||(t + L) w_{k+1}(t) - b||_M for every t in ``ts``."""
    pencil = basis.pencil
    mu, Q = basis.ritz_values, basis.ritz_vectors
    g = Q.T @ basis.coeffs
    inv = 1.0 / (ts[:, None] + mu[None, :])
    Y = Q @ (inv * g).T  # reduced coefficients of w(t), one column per t
    tY = Q @ ((ts[:, None] * inv) * g).T  # t * w(t) without forming t * Y
    R = basis.W @ tY + LW @ Y - basis.b[:, None]
    MR = R if pencil.identity_mass else pencil.M @ R
    return np.sqrt(np.maximum(np.einsum("ij,ij->j", R, MR), 0.0))


def greedy_snapshots(pencil: OperatorPencil, b, xi_grid=None, k: int = 10) -> PoleSet:
    """Weak greedy snapshot selection driven by exact residuals.

    Starting from span{b} (the snapshot t = inf), each step adds the
    parameter of ``xi_grid`` with the largest residual
    ||(t + L) w_{k+1}(t) - b||_M of the current surrogate.  Ties go to the
    smaller parameter.  A candidate whose snapshot is numerically dependent
    on the current space is discarded and the next one is tried.  Selection
    stops early once every residual falls below ``GREEDY_STOP`` ||b||_M, or
    after ``GREEDY_MAX_REJECTS`` dependent candidates in a row (the space is
    numerically saturated); the returned set is then shorter than k + 1.
    """
    xi = greedy_grid() if xi_grid is None else np.asarray(xi_grid, dtype=float).ravel()
    if xi.size == 0:
        raise InvalidArgument("training grid must be nonempty")
    if np.any(~np.isfinite(xi)) or np.any(xi < 0):
        raise InvalidArgument("training parameters must be finite and nonnegative")
    xi = np.unique(xi)
    if int(k) != k or k < 0 or k > xi.size:
        raise InvalidArgument(f"k must lie in [0, {xi.size}], got {k!r}")
    b = np.asarray(b, dtype=float)
    bnorm = m_norm(pencil, b)
    picks: list[float] = []
    available = np.ones(xi.size, dtype=bool)
    basis = krylov.build_basis(pencil, b, PoleSet.from_snapshots([math.inf]))
    rejects = 0
    while len(picks) < k and available.any() and rejects < GREEDY_MAX_REJECTS:
        LW = np.column_stack([pencil.mass_solve(pencil.K @ basis.W[:, j]) for j in range(basis.dim)])
        res = _residual_norms(basis, LW, xi[available])
        if res.max() < GREEDY_STOP * bnorm:
            break
        idx = np.flatnonzero(available)[int(np.argmax(res))]
        available[idx] = False
        trial = krylov.build_basis(pencil, b, PoleSet.from_snapshots([math.inf, *picks, xi[idx]]))
        if trial.dropped:
            # the snapshot adds no new direction; residuals at this level are rounding noise
            rejects += 1
            continue
        rejects = 0
        picks.append(float(xi[idx]))
        basis = trial
    return PoleSet.from_snapshots([math.inf, *picks])


def _valid_poles(r: rational.BarycentricRational):
    try:
        d = rational.poles(r)
    except ValidationError:
        return None
    return None if np.any(d > 0) else d


@functools.lru_cache(maxsize=256)
def _brasil_cached(s: float, lo: float, hi: float, k: int, opts: tuple) -> rational.BestApproxReport:
    return rational.brasil_best_approx(s, SpectralInterval(lo, hi), k, **dict(opts))


def best_approx(s: float, interval, k: int, **brasil_opts) -> rational.BestApproxReport:
    """Best approximation of z^{-s} of degree at most k with admissible poles.

    Once the degree is so high that the iteration stops at the rounding
    floor, more degrees of freedom no longer reduce the error; they only
    make the partial fraction expansion ill-conditioned and can show up as
    spurious complex or positive poles.  In that regime the smallest degree
    that still reaches the floor is used instead.  The report's ``k`` is the
    degree actually used.  Reports are cached per (s, interval, degree).
    """
    lo, hi = _as_interval(interval)
    opts = tuple(sorted(brasil_opts.items()))

    def run(kk):
        return _brasil_cached(float(s), float(lo), float(hi), kk, opts)

    rep = run(int(k))
    kk = int(k)
    while kk > 0 and rep.floor_limited:
        lower = run(kk - 1)
        if not lower.floor_limited and _valid_poles(rep.approximant) is not None:
            break
        rep, kk = lower, kk - 1
    if kk > 0 and _valid_poles(rep.approximant) is None:
        raise ValidationError(f"best approximation of degree {kk} has inadmissible poles")
    return rep


def bura_poles(s: float, interval, k: int, report=None, **brasil_opts) -> PoleSet:
    """Poles of the best uniform approximation of z^{-s}, together with -inf.

    A precomputed :class:`~fracrkm.rational.BestApproxReport` may be passed
    as ``report`` to skip the approximation step.
    """
    s = _check_s(s)
    if int(k) != k or k < 0:
        raise InvalidArgument(f"k must be a nonnegative integer, got {k!r}")
    if k == 0:
        return PoleSet((NEG_INF,))
    if report is None:
        report = best_approx(s, interval, int(k), **brasil_opts)
    d = rational.poles(report.approximant)
    if np.any(d > 0):
        raise ValidationError(f"best approximation has a positive pole: {d.tolist()}")
    return PoleSet((NEG_INF, *np.sort(d)))


# ---------------------------------------------------------------------------
# solvers


def _power(s):
    return lambda z: z ** (-s)


def solve_rkm(pencil: OperatorPencil, b, s: float, poles, method: str = "zolo") -> MethodResult:
    """Rayleigh-Ritz extraction of L^{-s} b from the rational Krylov space of ``poles``."""
    s = _check_s(s)
    poles = poles if isinstance(poles, PoleSet) else PoleSet(tuple(poles))
    t0 = time.perf_counter()
    basis = krylov.build_basis(pencil, b, poles)
    t1 = time.perf_counter()
    u = krylov.extract(basis, _power(s))
    t2 = time.perf_counter()
    meta = {
        "snapshots": _snapshot_list(poles),
        "dim": basis.dim,
        "dropped": list(basis.dropped),
        "time_basis": t1 - t0,
        "time_extract": t2 - t1,
    }
    return MethodResult(u, method, poles.k, s, t2 - t0, meta)


def sinc_weights(grid: SincGrid, s: float):
    """Parameters t_j = e^{y_j} and weights of the truncated sinc rule for z^{-s}.

    sum_j weight_j / (t_j + z) approximates z^{-s}.
    """
    y = grid.nodes
    c = grid.k_star * math.sin(math.pi * s) / math.pi
    return np.exp(y), c * np.exp((1.0 - s) * y)


def solve_sinc_rbm(pencil: OperatorPencil, b, s: float, snapshots, grid: SincGrid) -> MethodResult:
    """Sinc-quadrature reduced-basis approximation on the space of ``snapshots``.

    Each quadrature term is a reduced resolvent query, so the sum is
    evaluated in the eigenbasis of the projected operator in one pass.
    """
    s = _check_s(s)
    if not grid.covers(s):
        raise PreconditionError(f"s = {s} outside the sinc grid range [{grid.s_min}, {grid.s_max}]")
    poles = snapshots if isinstance(snapshots, PoleSet) else PoleSet.from_snapshots(snapshots)
    t0 = time.perf_counter()
    basis = krylov.build_basis(pencil, b, poles)
    t1 = time.perf_counter()
    ts, wts = sinc_weights(grid, s)
    u = basis.W @ krylov.resolvent_batch(basis, ts, wts)
    t2 = time.perf_counter()
    meta = {
        "snapshots": _snapshot_list(poles),
        "dim": basis.dim,
        "grid": {"k_star": grid.k_star, "M": grid.M_s, "N": grid.N_s},
        "time_basis": t1 - t0,
        "time_extract": t2 - t1,
    }
    return MethodResult(u, "sinc", poles.k, s, t2 - t0, meta)


def gauss_sizes(s: float, k_star: float) -> tuple[int, int]:
    """Rule sizes (M_minus, M_plus) of the split Gauss-Laguerre scheme."""
    m_plus = math.ceil(math.pi**2 / (4.0 * s * k_star**2))
    m_minus = math.ceil(math.pi**2 / (4.0 * (1.0 - s) * k_star**2))
    return m_minus, m_plus


def _gauss_reduced(basis: krylov.KrylovBasis, nodes, weights, sigma: float, plus: bool) -> np.ndarray:
    mu = basis.ritz_values
    Q = basis.ritz_vectors
    g = Q.T @ basis.coeffs
    if plus:
        # tau e^{y/s} (e^{y/s} + mu)^{-1} written so that e^{y/s} never overflows
        D = weights[:, None] / (1.0 + mu[None, :] * np.exp(-nodes / sigma)[:, None])
    else:
        D = weights[:, None] / (np.exp(-nodes / sigma)[:, None] + mu[None, :])
    return Q @ (D.sum(axis=0) * g)


def solve_gauss_rbm(
    pencil: OperatorPencil, b, s: float, snapshots_minus, snapshots_plus, k_star: float = 0.15
) -> MethodResult:
    """Split Gauss-Laguerre reduced-basis approximation.

    The integral over t in (0, 1) uses the substitution t = e^{-y/s_-} and the
    one over (1, inf) uses t = e^{y/s_+}, with s_+ = s and s_- = 1 - s.  Each
    half is evaluated against its own reduced basis.
    """
    s = _check_s(s)
    if not k_star > 0:
        raise InvalidArgument(f"k_star must be positive, got {k_star!r}")
    pm = snapshots_minus if isinstance(snapshots_minus, PoleSet) else PoleSet.from_snapshots(snapshots_minus)
    pp = snapshots_plus if isinstance(snapshots_plus, PoleSet) else PoleSet.from_snapshots(snapshots_plus)
    if pm.poles[0] != pp.poles[0]:
        raise PreconditionError("both snapshot sets must start with the same t_0")
    s_plus, s_minus = s, 1.0 - s
    m_minus, m_plus = gauss_sizes(s, k_star)
    rule_minus = specfun.gauss_laguerre(m_minus)
    rule_plus = specfun.gauss_laguerre(m_plus)
    t0 = time.perf_counter()
    basis_minus = krylov.build_basis(pencil, b, pm)
    basis_plus = basis_minus if pp == pm else krylov.build_basis(pencil, b, pp)
    t1 = time.perf_counter()
    c_minus = math.sin(math.pi * s_minus) / (math.pi * s_minus)
    c_plus = math.sin(math.pi * s_plus) / (math.pi * s_plus)
    u = c_minus * (basis_minus.W @ _gauss_reduced(basis_minus, rule_minus.nodes, rule_minus.weights, s_minus, False))
    u = u + c_plus * (basis_plus.W @ _gauss_reduced(basis_plus, rule_plus.nodes, rule_plus.weights, s_plus, True))
    t2 = time.perf_counter()
    meta = {
        "snapshots_minus": _snapshot_list(pm),
        "snapshots_plus": _snapshot_list(pp),
        "M_minus": m_minus,
        "M_plus": m_plus,
        "time_basis": t1 - t0,
        "time_extract": t2 - t1,
    }
    k = pm.k + pp.k if pp != pm else pm.k
    return MethodResult(u, "gauss", k, s, t2 - t0, meta)


def solve_dual(pencil: OperatorPencil, b, s: float, snapshots) -> MethodResult:
    s = _check_s(s)
    poles = snapshots if isinstance(snapshots, PoleSet) else PoleSet.from_snapshots(snapshots)
    t0 = time.perf_counter()
    u = krylov.dual_rbm(pencil, b, poles, s)
    t1 = time.perf_counter()
    return MethodResult(u, "dual", poles.k, s, t1 - t0, {"snapshots": _snapshot_list(poles)})


def solve_direct(
    pencil: OperatorPencil, b, s: float, k: int, interval=None, approximant=None, **brasil_opts
) -> MethodResult:
    """u_r = c_0 b + sum_j c_j (L - d_j)^{-1} b for the best approximation r of z^{-s}.

    ``approximant`` may be a precomputed BestApproxReport or a bare
    BarycentricRational (for instance one read back from disk); the
    approximation step is then skipped.
    """
    s = _check_s(s)
    if int(k) != k or k < 0:
        raise InvalidArgument(f"k must be a nonnegative integer, got {k!r}")
    b = np.asarray(b, dtype=float)
    t0 = time.perf_counter()
    meta: dict = {}
    rep = None
    if approximant is None:
        interval = spectral_interval(pencil) if interval is None else _as_interval(interval)
        approximant = best_approx(s, interval, int(k), **brasil_opts)
    if isinstance(approximant, rational.BestApproxReport):
        rep = approximant
        meta.update(
            interval=list(rep.interval),
            max_error=rep.max_error,
            deviation=rep.equioscillation_deviation,
            iterations=rep.iterations,
            floor_limited=rep.floor_limited,
            degree=rep.k,
        )
        approximant = rep.approximant
    # refit the expansion where it is used: the approximation interval, else the support nodes
    fit_on = rep.interval if rep is not None and rep.interval is not None else (
        float(approximant.nodes.min()), float(approximant.nodes.max())
    )
    pf = rational.to_partial_fractions(approximant, fit_interval=fit_on if fit_on[0] > 0 else None)
    if np.any(pf.poles > 0):
        raise ValidationError(f"approximant has a positive pole: {pf.poles.tolist()}")
    t1 = time.perf_counter()
    u = pf.c0 * b
    for c, d in pf.terms:
        u = u + c * shifted_solve(pencil, d, b)
    t2 = time.perf_counter()
    meta.update(
        poles=pf.poles.tolist(),
        residues=pf.residues.tolist(),
        c0=pf.c0,
        time_approx=t1 - t0,
        time_solves=t2 - t1,
    )
    return MethodResult(u, "direct", int(k), s, t2 - t0, meta)


def solve_oracle(pencil: OperatorPencil, b, s: float) -> MethodResult:
    """Reference solution U diag(lambda^{-s}) U^T M b from the dense eigendecomposition."""
    s = _check_s(s, closed=True)
    b = np.asarray(b, dtype=float)
    if b.shape != (pencil.n,):
        raise InvalidArgument(f"right-hand side must have shape ({pencil.n},)")
    t0 = time.perf_counter()
    lam, U = pencil.eigh()
    Mb = b if pencil.identity_mass else pencil.M @ b
    u = U @ (lam ** (-s) * (U.T @ Mb))
    t1 = time.perf_counter()
    return MethodResult(u, "oracle", pencil.n - 1, s, t1 - t0, {"lambda_min": lam[0], "lambda_max": lam[-1]})


# ---------------------------------------------------------------------------
# a priori bounds


def zolotarev_error_bound(s: float, k: int, interval, b_norm: float = 1.0) -> float:
    """4 lambda_1^{-s} exp(-C* k) ||b||_M for the Zolotarev-pole Krylov method."""
    lo, hi = _as_interval(interval)
    return 4.0 * lo ** (-s) * math.exp(-specfun.zolotarev_rate(lo / hi) * k) * b_norm


def theta_sup(snapshots, interval, n_grid: int = 10_000) -> float:
    """max over [lambda_1, lambda_n] of |prod_j (z - t_j) / (z + t_j)|, finite t_j only.

    The grid is log-spaced so that both ends of a wide interval are resolved.
    """
    poles = snapshots if isinstance(snapshots, PoleSet) else PoleSet.from_snapshots(snapshots)
    lo, hi = _as_interval(interval)
    z = np.geomspace(lo, hi, n_grid)
    t = -poles.finite
    if t.size == 0:
        return 1.0
    theta = np.prod((z[:, None] - t[None, :]) / (z[:, None] + t[None, :]), axis=1)
    return float(np.abs(theta).max())


def rbm_error_bound(t: float, snapshots, interval, b_norm: float = 1.0, n_grid: int = 10_000) -> float:
    """(2 / (t + lambda_1)) sup|Theta| ||b||_M for the reduced resolvent at parameter t."""
    lo, _ = _as_interval(interval)
    return 2.0 / (t + lo) * theta_sup(snapshots, interval, n_grid) * b_norm
