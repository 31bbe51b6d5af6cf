"""Rational Krylov spaces and reduced-basis surrogates in the M-geometry.

Everything here is orthonormalized in the M-inner product, so the projected
operator W^T K W is symmetric and its eigenvalues (the rational Ritz values)
lie in the spectral interval of the pencil.  With M = I this is the usual
Euclidean construction.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import densecore
from .errors import DegeneracyError, DomainError, FormatError, InvalidArgument, PreconditionError
from .operator import NEG_INF, OperatorPencil, as_pole, m_norm, shifted_solve
from .rational import BarycentricRational

__all__ = [
    "PoleSet",
    "KrylovBasis",
    "build_basis",
    "extract",
    "rbm_resolvent",
    "resolvent_batch",
    "spectral_interpolant",
    "dual_rbm",
    "basis_residual_norm",
    "save_basis",
    "load_basis",
]


@dataclass(frozen=True)
class PoleSet:
    """Ordered poles d_j in [-inf, 0]; snapshot view t_j = -d_j."""

    poles: tuple

    def __post_init__(self):
        ps = tuple(as_pole(d) for d in self.poles)
        if not ps:
            raise InvalidArgument("a pole set needs at least one pole")
        finite = [d for d in ps if d is not NEG_INF]
        if len(ps) - len(finite) > 1:
            raise InvalidArgument("at most one pole may be -inf")
        if len(set(finite)) != len(finite):
            raise InvalidArgument(f"poles must be pairwise distinct, got {finite}")
        object.__setattr__(self, "poles", ps)

    @classmethod
    def from_snapshots(cls, snapshots) -> "PoleSet":
        out = []
        for t in snapshots:
            t = float(t)
            if math.isnan(t) or t < 0:
                raise InvalidArgument(f"snapshot must lie in [0, inf], got {t!r}")
            out.append(NEG_INF if t == math.inf else (-t if t > 0 else 0.0))
        return cls(tuple(out))

    @property
    def snapshots(self) -> tuple:
        return tuple(math.inf if d is NEG_INF else (-d if d < 0 else 0.0) for d in self.poles)

    @property
    def finite(self) -> np.ndarray:
        return np.array([d for d in self.poles if d is not NEG_INF], dtype=float)

    @property
    def has_infinity(self) -> bool:
        return any(d is NEG_INF for d in self.poles)

    @property
    def k(self) -> int:
        return len(self.poles) - 1

    def __len__(self):
        return len(self.poles)

    def __iter__(self):
        return iter(self.poles)

    def __repr__(self):
        body = ", ".join("-inf" if d is NEG_INF else repr(d) for d in self.poles)
        return f"PoleSet([{body}])"


@dataclass(frozen=True, eq=False)
class KrylovBasis:
    W: np.ndarray
    projected: np.ndarray
    pencil: OperatorPencil
    poles: PoleSet
    b: np.ndarray
    kept: tuple = ()
    dropped: tuple = ()
    ritz_values: np.ndarray = field(default=None, repr=False)
    ritz_vectors: np.ndarray = field(default=None, repr=False)
    coeffs: np.ndarray = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.W.shape[1]


def _as_poleset(poles) -> PoleSet:
    return poles if isinstance(poles, PoleSet) else PoleSet(tuple(poles))


def build_basis(pencil: OperatorPencil, b, poles, workers: int = 1) -> KrylovBasis:
    """M-orthonormal basis of the rational Krylov space Q_{k+1}(L, b).

    All shifted systems are solved first and then orthonormalized; numerically
    dependent directions are dropped and listed in ``dropped``.
    """
    b = np.asarray(b, dtype=float)
    if b.shape != (pencil.n,):
        raise InvalidArgument(f"right-hand side must have shape ({pencil.n},)")
    if not np.any(b):
        raise InvalidArgument("right-hand side must be nonzero")
    poles = _as_poleset(poles)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            cols = list(pool.map(lambda d: shifted_solve(pencil, d, b), poles))
    else:
        cols = [shifted_solve(pencil, d, b) for d in poles]
    M = None if pencil.identity_mass else pencil.M
    ortho = densecore.orthonormalize(cols, M)
    W = ortho.basis
    KW = pencil.K @ W
    H = densecore.as_dense_sym(W.T @ KW)
    mu, Q = densecore.sym_eig(H)
    c = W.T @ (b if M is None else M @ b)
    return KrylovBasis(W, H, pencil, poles, b, ortho.kept, ortho.dropped, mu, Q, c)


def extract(basis: KrylovBasis, f) -> np.ndarray:
    """Rayleigh-Ritz approximation W f(L_{k+1}) W^T M b of f(L) b."""
    with np.errstate(all="ignore"):
        fmu = np.asarray(f(basis.ritz_values), dtype=float)
    if not np.all(np.isfinite(fmu)):
        raise DomainError(f"function undefined at rational Ritz values {basis.ritz_values.tolist()}")
    Q = basis.ritz_vectors
    return basis.W @ (Q @ (fmu * (Q.T @ basis.coeffs)))


def resolvent_batch(basis: KrylovBasis, ts, scale=None) -> np.ndarray:
    """Reduced coefficients of sum_i scale_i (t_i I + L_{k+1})^{-1} W^T M b.

    Returns the vector y with the sum equal to W y.  ``scale`` defaults to 1.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    scale = np.ones_like(ts) if scale is None else np.broadcast_to(np.asarray(scale, dtype=float), ts.shape)
    mu = basis.ritz_values
    g = basis.ritz_vectors.T @ basis.coeffs
    D = scale[:, None] / (ts[:, None] + mu[None, :])
    return basis.ritz_vectors @ (D.sum(axis=0) * g)


def rbm_resolvent(basis: KrylovBasis, t: float) -> np.ndarray:
    """Galerkin surrogate w_{k+1}(t) = W (t I + L_{k+1})^{-1} W^T M b."""
    t = float(t)
    if not t >= 0:
        raise InvalidArgument(f"snapshot parameter must be >= 0, got {t!r}")
    return basis.W @ resolvent_batch(basis, [t])


def _log_products(mu, d):
    """log|.| and sign of q_k(mu_j) / l'(mu_j) for each Ritz value."""
    logs = np.zeros(len(mu))
    signs = np.ones(len(mu))
    for j, m in enumerate(mu):
        num = m - d
        den = m - np.delete(mu, j)
        logs[j] = np.log(np.abs(num)).sum() - np.log(np.abs(den)).sum()
        signs[j] = np.prod(np.sign(num)) * np.prod(np.sign(den))
    return logs, signs


def spectral_interpolant(basis: KrylovBasis, f) -> BarycentricRational:
    """Rational function r = p / q_k with r(mu_j) = f(mu_j) at the Ritz values.

    q_k is the monic polynomial with the finite poles of the space as roots;
    extract(basis, f) equals r(L) b.
    """
    mu = basis.ritz_values
    if basis.dim != len(basis.poles):
        raise DegeneracyError(
            f"space dimension {basis.dim} is below the number of poles {len(basis.poles)}"
        )
    if len(mu) > 1:
        gaps = np.diff(mu)
        if np.any(gaps <= 1e-10 * np.abs(mu[1:])):
            raise DegeneracyError(f"rational Ritz values are not pairwise distinct: {mu.tolist()}")
    fmu = np.asarray(f(mu), dtype=float)
    d = basis.poles.finite
    logs, signs = _log_products(mu, d)
    shift = logs.max()
    w = signs * np.exp(logs - shift)
    offset = 0.0 if basis.poles.has_infinity else math.exp(-shift)
    return BarycentricRational(mu.copy(), fmu, w, offset)


def dual_rbm(pencil: OperatorPencil, b, snapshots, s: float) -> np.ndarray:
    """Dual reduced-basis approximation L^{-1} V L_*^{s-1} V^T M b, L_* = V^T M L^{-1} V.

    ``snapshots`` must contain t = inf.
    """
    poles = snapshots if isinstance(snapshots, PoleSet) else PoleSet.from_snapshots(snapshots)
    if not poles.has_infinity:
        raise PreconditionError("dual reduced basis approximation needs the snapshot t = inf")
    basis = build_basis(pencil, b, poles)
    V = basis.W
    MV = V if pencil.identity_mass else pencil.M @ V
    Y = np.column_stack([shifted_solve(pencil, 0.0, V[:, j]) for j in range(V.shape[1])])
    Lstar = densecore.as_dense_sym(MV.T @ Y)
    mu, Q = densecore.sym_eig(Lstar)
    g = Q @ (mu ** (s - 1.0) * (Q.T @ basis.coeffs))
    return Y @ g


def basis_residual_norm(basis: KrylovBasis) -> float:
    """||b - W W^T M b||_M / ||b||_M, zero when b lies in the space."""
    b = basis.b
    return m_norm(basis.pencil, b - basis.W @ basis.coeffs) / m_norm(basis.pencil, b)


def save_basis(path, basis: KrylovBasis) -> None:
    """Store W, the Ritz pairs, W^T M b, b and the snapshots in an ``.npz`` file.

    The pencil is not stored; :func:`load_basis` needs it again.
    """
    np.savez(
        path,
        W=basis.W,
        projected=basis.projected,
        ritz_values=basis.ritz_values,
        ritz_vectors=basis.ritz_vectors,
        coeffs=basis.coeffs,
        b=basis.b,
        snapshots=np.array(basis.poles.snapshots, dtype=float),
        kept=np.array(basis.kept, dtype=int),
        dropped=np.array(basis.dropped, dtype=int),
    )


def load_basis(path, pencil: OperatorPencil) -> KrylovBasis:
    try:
        with np.load(path) as data:
            fields = {key: data[key] for key in data.files}
        poles = PoleSet.from_snapshots(fields["snapshots"])
        W = fields["W"]
    except (OSError, KeyError, ValueError) as exc:
        raise FormatError(f"cannot read basis from {path}: {exc}") from exc
    if W.shape[0] != pencil.n:
        raise InvalidArgument(f"stored basis has {W.shape[0]} rows, pencil has dimension {pencil.n}")
    return KrylovBasis(
        W,
        fields["projected"],
        pencil,
        poles,
        fields["b"],
        tuple(fields["kept"].tolist()),
        tuple(fields["dropped"].tolist()),
        fields["ritz_values"],
        fields["ritz_vectors"],
        fields["coeffs"],
    )
