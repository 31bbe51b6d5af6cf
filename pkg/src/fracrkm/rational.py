"""Rational functions in barycentric and partial-fraction form.

A :class:`BarycentricRational` is

    r(z) = sum_j w_j f_j / (z - x_j)  /  (offset + sum_j w_j / (z - x_j))

With ``offset == 0`` and m support points this is the classical type (m-1, m-1)
barycentric formula.  A nonzero offset raises the denominator degree by one,
which is needed for the type (k, k+1) interpolants that appear when every pole
of a rational Krylov space is finite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .errors import (
    ConditioningError,
    ConvergenceError,
    DegeneracyError,
    DomainError,
    FormatError,
    InvalidArgument,
    ValidationError,
)

__all__ = [
    "BarycentricRational",
    "PartialFraction",
    "BestApproxReport",
    "evaluate",
    "interpolate",
    "poles",
    "to_partial_fractions",
    "brasil_best_approx",
    "local_error_maxima",
    "save_approximant",
    "load_approximant",
]

SNAP_TOL = 1e-14
POLE_IMAG_TOL = 1e-8
CLUSTER_TOL = 1e-10


@dataclass(frozen=True)
class BarycentricRational:
    nodes: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        for name in ("nodes", "values", "weights"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if not (len(self.nodes) == len(self.values) == len(self.weights)):
            raise InvalidArgument("nodes, values and weights must have equal length")
        if np.any(self.weights == 0.0):
            raise InvalidArgument("barycentric weights must be nonzero")

    @property
    def degree(self) -> tuple[int, int]:
        m = len(self.nodes)
        return (m - 1, m if self.offset != 0.0 else m - 1)

    def __call__(self, z):
        return evaluate(self, z)


@dataclass(frozen=True)
class PartialFraction:
    """r(z) = c0 + sum_j c_j / (z - d_j)."""

    c0: float
    residues: np.ndarray
    poles: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "residues", np.atleast_1d(np.asarray(self.residues, dtype=float)))
        object.__setattr__(self, "poles", np.atleast_1d(np.asarray(self.poles, dtype=float)))

    @property
    def terms(self) -> list[tuple[float, float]]:
        return list(zip(self.residues.tolist(), self.poles.tolist()))

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        zz = np.atleast_1d(z)
        out = self.c0 + (self.residues / (zz[:, None] - self.poles)).sum(axis=1) if len(self.poles) else np.full(zz.shape, float(self.c0))
        return out.reshape(z.shape) if z.ndim else float(out[0])


@dataclass
class BestApproxReport:
    approximant: BarycentricRational
    max_error: float
    equioscillation_deviation: float
    iterations: int
    extrema: np.ndarray = field(default_factory=lambda: np.zeros(0))
    signed_errors: np.ndarray = field(default_factory=lambda: np.zeros(0))
    s: float | None = None
    interval: tuple[float, float] | None = None
    k: int | None = None
    floor_limited: bool = False


def evaluate(r: BarycentricRational, z):
    """Second-form barycentric evaluation; exact at the support nodes."""
    z = np.asarray(z, dtype=float)
    zz = np.atleast_1d(z).ravel()
    x, f, w = r.nodes, r.values, r.weights
    diff = zz[:, None] - x[None, :]
    near = np.abs(diff) <= SNAP_TOL * np.maximum(np.abs(x), 1.0)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        C = 1.0 / diff
        out = (C @ (w * f)) / (C @ w + r.offset)
    hit = near.any(axis=1)
    if hit.any():
        out[hit] = f[np.argmax(near[hit], axis=1)]
    out = out.reshape(z.shape)
    return float(out) if z.ndim == 0 else out


def _nullvector(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # column equilibration; the null vector is mapped back afterwards
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0.0] = 1.0
    _, sv, Vt = np.linalg.svd(A / scale, full_matrices=True)
    return Vt[-1] / scale, sv


def _loewner(fs, xs, ft, xt):
    return (ft[:, None] - fs[None, :]) / (xt[:, None] - xs[None, :])


def interpolate(f, nodes, rank_tol: float = 1e-13) -> BarycentricRational:
    """Type (k, k) rational interpolant through 2k+1 samples of ``f``.

    Every other node is a barycentric support point; the weights span the
    null space of the k x (k+1) Loewner matrix built from the remaining nodes.
    If the Loewner matrix is numerically rank deficient the data come from a
    rational function of lower type, which is then recovered from a tall
    Loewner system; inconsistent degenerate data raise DegeneracyError.
    Pass ``rank_tol=0`` to skip the rank test.
    """
    x = np.asarray(nodes, dtype=float)
    if x.ndim != 1 or len(x) % 2 != 1:
        raise InvalidArgument("interpolate needs an odd number 2k+1 of nodes")
    if len(np.unique(x)) != len(x):
        raise InvalidArgument("interpolation nodes must be distinct")
    fx = np.asarray(f(x) if callable(f) else f, dtype=float)
    if not np.all(np.isfinite(fx)):
        raise DomainError("function is not finite at every node")
    k = len(x) // 2
    if k == 0:
        return BarycentricRational(x, fx, np.ones(1))

    fscale = max(np.abs(fx).max(), np.finfo(float).tiny)
    if np.ptp(fx) <= 1e-15 * fscale:
        return BarycentricRational(x[:1], fx[:1], np.ones(1))

    xs, fs, xt, ft = x[::2], fx[::2], x[1::2], fx[1::2]
    w, sv = _nullvector(_loewner(fs, xs, ft, xt))
    if rank_tol > 0:
        rank = int(np.sum(sv > rank_tol * sv[0]))
        if rank < k:
            idx = np.unique(np.round(np.linspace(0, len(x) - 1, rank + 1)).astype(int))
            rest = np.setdiff1d(np.arange(len(x)), idx)
            w, sv2 = _nullvector(_loewner(fx[idx], x[idx], fx[rest], x[rest]))
            if sv2[-1] > 1e-10 * sv2[0]:
                raise DegeneracyError(f"degenerate rational interpolation problem at nodes {x[rest].tolist()}")
            xs, fs = x[idx], fx[idx]
    if np.any(w == 0.0):
        bad = xs[w == 0.0]
        raise DegeneracyError(f"zero barycentric weight at nodes {bad.tolist()}")
    return BarycentricRational(xs, fs, w)


def poles(r: BarycentricRational) -> np.ndarray:
    """Finite real poles of ``r``, sorted ascending.

    Computed as the finite eigenvalues of the (m+1) x (m+1) arrowhead pencil
    [[offset, w^T], [1, diag(x)]] - z diag(0, 1, ..., 1).
    """
    m = len(r.nodes)
    expected = m if r.offset != 0.0 else m - 1
    if expected == 0:
        return np.zeros(0)
    scale = float(np.abs(r.nodes).max()) or 1.0
    x = r.nodes / scale
    A = np.zeros((m + 1, m + 1))
    A[0, 0] = r.offset
    A[0, 1:] = r.weights / scale
    A[1:, 0] = 1.0
    A[1:, 1:] = np.diag(x)
    B = np.eye(m + 1)
    B[0, 0] = 0.0
    ev = sla.eigvals(A, B)
    ev = ev[np.isfinite(ev)]
    ev = ev[np.argsort(np.abs(ev))][:expected]
    ev = ev[np.abs(ev) < 1e12]
    bad = np.abs(ev.imag) > POLE_IMAG_TOL * (np.abs(ev) + 1e-8)
    if bad.any():
        raise ValidationError(f"approximant has non-real poles {(ev[bad] * scale).tolist()}")
    return np.sort(ev.real * scale)


def to_partial_fractions(r: BarycentricRational, pole_list=None, fit_interval=None) -> PartialFraction:
    """Convert to c0 + sum c_j / (z - d_j) using the residue formula.

    With ``fit_interval = (a, b)``, the poles are kept and c0, c_j are then
    refitted by linear least squares against r on log-spaced points of
    [a, b] (0 < a <= b).  Once the approximation error is near rounding
    level, the errors in the computed poles and residues exceed it; the
    refit absorbs them on the interval where the expansion is used.
    """
    d = poles(r) if pole_list is None else np.sort(np.asarray(pole_list, dtype=float))
    if len(d) > 1:
        gaps = np.diff(d)
        ref = np.maximum(np.abs(d[1:]), np.abs(d[:-1]))
        if np.any(gaps <= CLUSTER_TOL * np.maximum(ref, 1e-300)):
            raise ConditioningError(f"clustered poles {d.tolist()}")
    x, f, w = r.nodes, r.values, r.weights
    if r.offset != 0.0:
        c0 = 0.0
    else:
        sw = w.sum()
        if abs(sw) <= 1e-14 * np.abs(w).sum():
            raise ConditioningError("approximant is unbounded at infinity")
        c0 = float((w * f).sum() / sw)
    num = (1.0 / (d[:, None] - x[None, :])) @ (w * f)
    # The denominator sum equals lead * q(z) / l(z) with q monic over the poles
    # and l over the nodes.  Its derivative at d_j is taken from that product
    # form: differentiating the alternating sum cancels badly and moves the
    # poles off d_j by rounding.
    lead = r.offset if r.offset != 0.0 else w.sum()
    log_l, sign_l = _log_prod(d[:, None] - x[None, :])
    diff = d[:, None] - d[None, :]
    np.fill_diagonal(diff, 1.0)
    log_q, sign_q = _log_prod(diff)
    dden = lead * sign_q * sign_l * np.exp(log_q - log_l)
    pf = PartialFraction(c0, num / dden, d)
    return pf if fit_interval is None else _refit(pf, r, fit_interval)


def _refit(pf: PartialFraction, r: BarycentricRational, interval) -> PartialFraction:
    a, b = (float(v) for v in interval)
    if not 0 < a <= b:
        raise InvalidArgument(f"fit interval must satisfy 0 < a <= b, got {interval!r}")
    d = pf.poles
    z = np.geomspace(a, b, 40 * (len(d) + 1))
    free_c0 = pf.c0 != 0.0 or r.offset == 0.0
    cols = ([np.ones_like(z)] if free_c0 else []) + [1.0 / (z - dj) for dj in d]
    if not cols:
        return pf
    A = np.column_stack(cols)
    scale = np.abs(A).max(axis=0)
    coef = np.linalg.lstsq(A / scale, evaluate(r, z), rcond=None)[0] / scale
    if free_c0:
        return PartialFraction(float(coef[0]), coef[1:], d)
    return PartialFraction(0.0, coef, d)


def _log_prod(A):
    """Row-wise log|prod| and sign of prod."""
    return np.log(np.abs(A)).sum(axis=1), np.prod(np.sign(A), axis=1)


# ---------------------------------------------------------------------------
# best uniform approximation of z^{-s}


def _golden_max(g, lo, hi, iters=60):
    """Vectorized golden-section search for max of g on each [lo_i, hi_i]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo.copy(), hi.copy()
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    gc, gd = g(c), g(d)
    for _ in range(iters):
        left = gc > gd
        a = np.where(left, a, c)
        b = np.where(left, d, b)
        fresh = np.where(left, b - invphi * (b - a), a + invphi * (b - a))
        gf = g(fresh)
        c, d = np.where(left, fresh, d), np.where(left, c, fresh)
        gc, gd = np.where(left, gf, gd), np.where(left, gc, gf)
    x = 0.5 * (a + b)
    return x, g(x)


def local_error_maxima(f, r, bounds, iters: int = 60):
    """Locate max |f - r| inside each interval [bounds[i], bounds[i+1]].

    Returns (abscissae, signed errors).  Interval endpoints are compared too,
    so maxima attained at the ends of the approximation interval are found.
    """
    bounds = np.asarray(bounds, dtype=float)
    lo, hi = bounds[:-1], bounds[1:]

    def g(z):
        return np.abs(f(z) - r(z))

    xm, gm = _golden_max(g, lo, hi, iters)
    for ends in (lo, hi):
        ge = g(ends)
        better = ge > gm
        xm = np.where(better, ends, xm)
        gm = np.where(better, ge, gm)
    return xm, f(xm) - r(xm)


def _constant_best(s, a, b):
    fa, fb = a ** (-s), b ** (-s)
    c = 0.5 * (fa + fb)
    node = c ** (-1.0 / s) if b > a else a
    r = BarycentricRational(np.array([node]), np.array([c]), np.ones(1))
    err = 0.5 * (fa - fb)
    return r, err, np.array([a, b]), np.array([fa - c, fb - c])


def brasil_best_approx(
    s: float,
    interval,
    k: int,
    max_iter: int = 2000,
    tol: float = 1e-3,
    beta: float = 0.5,
    golden_iters: int = 60,
    max_factor: float = 2.0,
    floor_ulps: float = 50.0,
) -> BestApproxReport:
    """Best uniform type (k, k) rational approximation of z^{-s} on an interval.

    The 2k+1 interpolation nodes split the interval into 2k+2 pieces.  Each
    sweep interpolates, finds the local error maximum on every piece and
    rescales the piece lengths by (local_max / geometric_mean)^(-beta), with
    the factor clipped to [1/max_factor, max_factor].  beta is halved whenever
    a sweep increases the deviation and recovers by 10% per improving sweep.
    The iteration stops once max/min of the local maxima is within 1 + tol.

    Once the spread of the local maxima drops below ``floor_ulps`` units of
    roundoff of the largest function value, the maxima are no longer
    resolvable in double precision; that iterate is returned with
    ``floor_limited`` set.
    """
    if not (0.0 < s < 1.0):
        raise InvalidArgument(f"exponent must lie in (0, 1), got {s!r}")
    if hasattr(interval, "lambda_min"):
        a, b = float(interval.lambda_min), float(interval.lambda_max)
    else:
        a, b = float(interval[0]), float(interval[1])
    if not (0.0 < a <= b):
        raise InvalidArgument(f"invalid interval [{a}, {b}]")
    if k < 0:
        raise InvalidArgument("degree must be nonnegative")
    meta = dict(s=s, interval=(a, b), k=k)

    def f(z):
        return np.power(z, -s)

    if k == 0:
        r, err, ext, signed = _constant_best(s, a, b)
        return BestApproxReport(r, err, 0.0, 0, ext, signed, **meta)
    if a == b:
        raise InvalidArgument("degree k >= 1 needs a nondegenerate interval")

    noise = floor_ulps * np.finfo(float).eps * a ** (-s)
    min_len = 1e-13 * (b - a)
    nodes = np.geomspace(a, b, 2 * k + 3)[1:-1]
    best = None
    step = beta
    prev_dev = np.inf
    for it in range(1, max_iter + 1):
        r = interpolate(f, nodes, rank_tol=0.0)
        bounds = np.concatenate(([a], nodes, [b]))
        xm, em = local_error_maxima(f, r, bounds, golden_iters)
        errs = np.maximum(np.abs(em), np.finfo(float).tiny)
        with np.errstate(over="ignore"):
            dev = float(errs.max() / errs.min() - 1.0)
        if best is None or dev < best.equioscillation_deviation:
            best = BestApproxReport(r, float(errs.max()), dev, it, xm, em, **meta)
        if dev <= tol:
            return best
        if errs.max() - errs.min() <= noise:
            return BestApproxReport(r, float(errs.max()), dev, it, xm, em, floor_limited=True, **meta)
        step = max(step / 2, 1e-3) if dev > prev_dev else min(step * 1.1, beta)
        prev_dev = dev
        lengths = np.diff(bounds)
        gm = np.exp(np.mean(np.log(errs)))
        lengths = lengths * np.clip((errs / gm) ** (-step), 1.0 / max_factor, max_factor)
        lengths = np.maximum(lengths * (b - a) / lengths.sum(), min_len)
        lengths *= (b - a) / lengths.sum()
        nodes = a + np.cumsum(lengths)[:-1]
    raise ConvergenceError(
        f"best approximation did not equioscillate within {max_iter} sweeps "
        f"(deviation {best.equioscillation_deviation:.3g})",
        best=best,
    )


# ---------------------------------------------------------------------------
# structured text export


def save_approximant(path, r: BarycentricRational, **metadata) -> None:
    doc = {
        "nodes": [repr(float(v)) for v in r.nodes],
        "values": [repr(float(v)) for v in r.values],
        "weights": [repr(float(v)) for v in r.weights],
        "offset": repr(float(r.offset)),
        "metadata": metadata,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_approximant(path) -> tuple[BarycentricRational, dict]:
    try:
        doc = json.loads(Path(path).read_text())
        r = BarycentricRational(
            np.array([float(v) for v in doc["nodes"]]),
            np.array([float(v) for v in doc["values"]]),
            np.array([float(v) for v in doc["weights"]]),
            float(doc.get("offset", 0.0)),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"cannot read approximant from {path}: {exc}") from exc
    return r, doc.get("metadata", {})
