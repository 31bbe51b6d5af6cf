"""Discrete diffusion operators L = M^{-1} K as symmetric definite pencils."""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import densecore
from .errors import (
    ConvergenceError,
    FormatError,
    InvalidArgument,
    ResourceLimit,
    ValidationError,
)

__all__ = [
    "NEG_INF",
    "is_neg_inf",
    "as_pole",
    "OperatorPencil",
    "SpectralInterval",
    "make_fd_laplacian_1d",
    "make_fd_laplacian_2d",
    "fd_eigenvalues_1d",
    "load_pencil",
    "write_matrix_market",
    "read_matrix_market",
    "write_pencil",
    "shifted_solve",
    "apply_L",
    "m_inner",
    "m_norm",
    "spectral_interval",
]

SOLVE_TOL = 1e-12
SYMMETRY_TOL = 1e-12
MAX_FD_DIM = 250_000
DENSE_INTERVAL_CAP = 400
_CACHE_SIZE = 64


class _NegInfinity:
    """The extended-real pole -inf (snapshot t = +inf).

    Kept as a tag so that it never enters floating-point arithmetic.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NEG_INF"

    def __reduce__(self):
        return (_NegInfinity, ())


NEG_INF = _NegInfinity()


def is_neg_inf(d) -> bool:
    return d is NEG_INF or (isinstance(d, (float, np.floating)) and d == -math.inf)


def as_pole(d):
    """Normalize a pole: -inf becomes the NEG_INF tag, finite values must be <= 0."""
    if is_neg_inf(d):
        return NEG_INF
    d = float(d)
    if math.isnan(d) or d > 0.0 or d == math.inf:
        raise InvalidArgument(f"pole must lie in [-inf, 0], got {d!r}")
    return d


@dataclass(frozen=True)
class SpectralInterval:
    lambda_min: float
    lambda_max: float

    def __post_init__(self):
        if not (0.0 < self.lambda_min <= self.lambda_max) or not math.isfinite(self.lambda_max):
            raise InvalidArgument(f"invalid spectral interval [{self.lambda_min}, {self.lambda_max}]")

    @property
    def delta(self) -> float:
        return self.lambda_min / self.lambda_max

    def __iter__(self):
        yield self.lambda_min
        yield self.lambda_max

    def contains(self, values, rtol: float = 0.0) -> bool:
        v = np.asarray(values)
        return bool(np.all(v >= self.lambda_min * (1 - rtol)) and np.all(v <= self.lambda_max * (1 + rtol)))


class _Slot:
    __slots__ = ("ready", "lu", "error")

    def __init__(self):
        self.ready = threading.Event()
        self.lu = None
        self.error = None


@dataclass(frozen=True, eq=False)
class OperatorPencil:
    """Symmetric definite pencil (K, M) with L = M^{-1} K.

    Instances are treated as immutable.  Sparse LU factors of K - d M are
    cached per shift; concurrent callers asking for the same shift wait for a
    single factorization.
    """

    K: sp.csr_matrix
    M: sp.csr_matrix
    identity_mass: bool = False
    _cache: OrderedDict = field(default_factory=OrderedDict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _memo: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_matrices(cls, K, M=None, check: bool = True) -> "OperatorPencil":
        K = sp.csr_matrix(K, dtype=float)
        if K.shape[0] != K.shape[1]:
            raise InvalidArgument(f"stiffness matrix must be square, got {K.shape}")
        identity = M is None
        M = sp.identity(K.shape[0], format="csr") if identity else sp.csr_matrix(M, dtype=float)
        if M.shape != K.shape:
            raise InvalidArgument(f"mass shape {M.shape} does not match stiffness shape {K.shape}")
        pencil = cls(K, M, identity)
        if check:
            pencil.validate()
        return pencil

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def validate(self) -> None:
        for name, A in (("K", self.K), ("M", self.M)):
            asym = abs(A - A.T).max() if A.nnz else 0.0
            if asym > SYMMETRY_TOL * max(abs(A).max(), np.finfo(float).tiny):
                raise ValidationError(f"{name} is not symmetric (max asymmetry {asym:.3g})")
        if not self.identity_mass and not _is_spd(self.M):
            raise ValidationError("mass matrix is not positive definite")
        if not _is_spd(self.K):
            raise ValidationError("pencil has a nonpositive generalized eigenvalue")

    def factor(self, d: float):
        """Cached sparse LU of K - d M."""
        key = float(d)
        with self._lock:
            slot = self._cache.get(key)
            owner = slot is None
            if owner:
                slot = _Slot()
                self._cache[key] = slot
                while len(self._cache) > _CACHE_SIZE:
                    self._cache.popitem(last=False)
            else:
                self._cache.move_to_end(key)
        if owner:
            try:
                A = (self.K - key * self.M) if key != 0.0 else self.K
                slot.lu = spla.splu(sp.csc_matrix(A))
            except RuntimeError as exc:
                slot.error = exc
            finally:
                slot.ready.set()
        slot.ready.wait()
        if slot.error is not None:
            raise RuntimeError(f"factorization of K - ({key}) M failed") from slot.error
        return slot.lu

    def mass_solve(self, v):
        if self.identity_mass:
            return np.array(v, dtype=float)
        with self._lock:
            slot = self._cache.get("mass")
            owner = slot is None
            if owner:
                slot = _Slot()
                self._cache["mass"] = slot
        if owner:
            slot.lu = spla.splu(sp.csc_matrix(self.M))
            slot.ready.set()
        slot.ready.wait()
        return slot.lu.solve(np.asarray(v, dtype=float))

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        return self.K.toarray(), self.M.toarray()

    def eigh(self, cap: int = densecore.DENSE_CAP) -> densecore.EigenPairs:
        """Dense generalized eigendecomposition, computed once per pencil."""
        with self._lock:
            pairs = self._memo.get("eigh")
        if pairs is None:
            if self.n > cap:
                raise ResourceLimit(f"dense eigendecomposition of size {self.n} exceeds cap {cap}")
            pairs = densecore.gen_sym_eig(*self.dense(), cap=cap)
            with self._lock:
                self._memo.setdefault("eigh", pairs)
        return pairs


def _is_spd(A) -> bool:
    n = A.shape[0]
    if n <= densecore.DENSE_CAP:
        try:
            np.linalg.cholesky(A.toarray())
            return True
        except np.linalg.LinAlgError:
            return False
    lam = spla.eigsh(A, k=1, which="SA", return_eigenvectors=False)
    return bool(lam[0] > 0)


# ---------------------------------------------------------------------------
# problem generators


def _tridiag(n: int) -> sp.csr_matrix:
    h = 1.0 / (n + 1)
    main = np.full(n, 2.0)
    off = np.full(n - 1, -1.0)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h**2


def fd_eigenvalues_1d(n: int) -> np.ndarray:
    """Closed-form eigenvalues (4/h^2) sin^2(j pi h / 2), j = 1..n, h = 1/(n+1)."""
    h = 1.0 / (n + 1)
    j = np.arange(1, n + 1)
    return 4.0 / h**2 * np.sin(j * np.pi * h / 2.0) ** 2


def make_fd_laplacian_1d(n: int) -> OperatorPencil:
    """3-point Dirichlet Laplacian on (0, 1) with h = 1/(n+1) and M = I."""
    if int(n) != n or n < 1:
        raise InvalidArgument(f"need n >= 1, got {n!r}")
    return OperatorPencil.from_matrices(_tridiag(int(n)), check=False)


def make_fd_laplacian_2d(nx: int, max_n: int = MAX_FD_DIM) -> OperatorPencil:
    """5-point Dirichlet Laplacian on the unit square, nx^2 unknowns, M = I."""
    if int(nx) != nx or nx < 1:
        raise InvalidArgument(f"need nx >= 1, got {nx!r}")
    nx = int(nx)
    if nx * nx > max_n:
        raise ResourceLimit(f"dimension {nx * nx} exceeds configured maximum {max_n}")
    T = _tridiag(nx)
    I = sp.identity(nx, format="csr")
    K = sp.kron(T, I, format="csr") + sp.kron(I, T, format="csr")
    return OperatorPencil.from_matrices(K, check=False)


# ---------------------------------------------------------------------------
# Matrix Market I/O


def read_matrix_market(path) -> sp.csr_matrix:
    """Read a real coordinate Matrix Market file (general or symmetric storage)."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise FormatError("empty file", line=1)
    header = lines[0].split()
    if len(header) != 5 or header[0] != "%%MatrixMarket":
        raise FormatError("missing %%MatrixMarket banner", line=1)
    obj, fmt, fld, sym = (h.lower() for h in header[1:])
    if obj != "matrix" or fmt != "coordinate":
        raise FormatError(f"only 'matrix coordinate' is supported, got '{obj} {fmt}'", line=1)
    if fld not in ("real", "integer", "double"):
        raise FormatError(f"unsupported field '{fld}'", line=1)
    if sym not in ("symmetric", "general"):
        raise FormatError(f"unsupported symmetry '{sym}'", line=1)

    size = None
    rows, cols, vals = [], [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        text = raw.strip()
        if not text or text.startswith("%"):
            continue
        parts = text.split()
        if size is None:
            try:
                size = tuple(int(p) for p in parts)
            except ValueError:
                raise FormatError(f"bad size line {text!r}", line=lineno) from None
            if len(size) != 3 or min(size) < 0:
                raise FormatError(f"bad size line {text!r}", line=lineno)
            continue
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except (ValueError, IndexError):
            raise FormatError(f"bad entry {text!r}", line=lineno) from None
        if len(parts) != 3:
            raise FormatError(f"bad entry {text!r}", line=lineno)
        if not (1 <= i <= size[0] and 1 <= j <= size[1]):
            raise FormatError(f"index ({i}, {j}) out of range", line=lineno)
        if sym == "symmetric" and i < j:
            raise FormatError(f"upper-triangle entry ({i}, {j}) in symmetric storage", line=lineno)
        rows.append(i - 1)
        cols.append(j - 1)
        vals.append(v)
    if size is None:
        raise FormatError("missing size line", line=len(lines) + 1)
    if len(vals) != size[2]:
        raise FormatError(f"header announces {size[2]} entries, found {len(vals)}", line=len(lines))
    rows, cols, vals = np.array(rows, dtype=int), np.array(cols, dtype=int), np.array(vals)
    if sym == "symmetric":
        off = rows != cols
        rows, cols, vals = (np.concatenate((rows, cols[off])), np.concatenate((cols, rows[off])),
                            np.concatenate((vals, vals[off])))
    return sp.csr_matrix((vals, (rows, cols)), shape=size[:2])


def write_matrix_market(path, A, comment: str | None = None) -> None:
    """Write A in symmetric coordinate storage (lower triangle, shortest repr)."""
    A = sp.coo_matrix(sp.tril(sp.csr_matrix(A)))
    order = np.lexsort((A.row, A.col))
    out = ["%%MatrixMarket matrix coordinate real symmetric"]
    if comment:
        out.append(f"% {comment}")
    out.append(f"{A.shape[0]} {A.shape[1]} {A.nnz}")
    out.extend(f"{i + 1} {j + 1} {float(v)!r}" for i, j, v in zip(A.row[order], A.col[order], A.data[order]))
    Path(path).write_text("\n".join(out) + "\n")


def write_pencil(pencil: OperatorPencil, path_K, path_M=None) -> None:
    write_matrix_market(path_K, pencil.K)
    if path_M is not None:
        write_matrix_market(path_M, pencil.M)


def load_pencil(path_K, path_M=None) -> OperatorPencil:
    """Read K (and optionally M; default identity) and validate the pencil."""
    K = read_matrix_market(path_K)
    M = None if path_M is None else read_matrix_market(path_M)
    return OperatorPencil.from_matrices(K, M, check=True)


# ---------------------------------------------------------------------------
# operations


def _check_len(pencil: OperatorPencil, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[0] != pencil.n:
        raise InvalidArgument(f"vector length {v.shape[0]} does not match dimension {pencil.n}")
    return v


def shifted_solve(pencil: OperatorPencil, d, rhs, tol: float = SOLVE_TOL) -> np.ndarray:
    """Solve (K - d M) w = M rhs, i.e. w = (L - d I)^{-1} rhs.

    The pole d = NEG_INF returns ``rhs`` unchanged.  One step of iterative
    refinement is taken if the relative residual exceeds ``tol``.
    """
    rhs = _check_len(pencil, rhs)
    d = as_pole(d)
    if d is NEG_INF:
        return rhs.copy()
    lu = pencil.factor(d)
    A = pencil.K - d * pencil.M if d != 0.0 else pencil.K
    f = pencil.M @ rhs
    w = lu.solve(f)
    res = f - A @ w
    fn = np.linalg.norm(f)
    if fn > 0 and np.linalg.norm(res) > tol * fn:
        w = w + lu.solve(res)
    return w


def apply_L(pencil: OperatorPencil, v) -> np.ndarray:
    """M^{-1} (K v)."""
    v = _check_len(pencil, v)
    return pencil.mass_solve(pencil.K @ v)


def m_inner(pencil: OperatorPencil, u, v) -> float:
    u = _check_len(pencil, u)
    v = _check_len(pencil, v)
    return float(u @ (pencil.M @ v))


def m_norm(pencil: OperatorPencil, u) -> float:
    return math.sqrt(max(m_inner(pencil, u, u), 0.0))


def spectral_interval(pencil: OperatorPencil, tol: float = 1e-8, maxiter: int | None = None) -> SpectralInterval:
    """Enclosure of [lambda_1, lambda_n], outward-rounded by the factor ``tol``.

    Dense generalized eigensolve up to 400 unknowns, ARPACK Lanczos in the
    M-inner product (shift-invert at 0 for the lower end) above.
    """
    if pencil.n <= DENSE_INTERVAL_CAP:
        lam = densecore.gen_sym_eig(*pencil.dense()).values
        lo, hi = float(lam[0]), float(lam[-1])
    else:
        M = None if pencil.identity_mass else pencil.M
        lo = hi = None
        try:
            hi = float(spla.eigsh(pencil.K, k=1, M=M, which="LA", tol=tol / 10,
                                  maxiter=maxiter, return_eigenvectors=False)[0])
            lo = float(spla.eigsh(pencil.K, k=1, M=M, sigma=0.0, which="LM", tol=tol / 10,
                                  maxiter=maxiter, return_eigenvectors=False)[0])
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError(
                "extremal eigenvalue iteration did not converge", best=(lo, hi, exc.eigenvalues)
            ) from exc
    if lo <= 0:
        raise ValidationError(f"nonpositive smallest eigenvalue {lo}")
    return SpectralInterval(lo * (1.0 - tol), hi * (1.0 + tol))
