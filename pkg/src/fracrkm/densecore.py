"""Small dense symmetric linear algebra.

Eigensolvers delegate to LAPACK through scipy; the generalized problem is
reduced to a standard one by Cholesky congruence so that the M-orthonormality
of the returned vectors is explicit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import InvalidArgument, ResourceLimit, ValidationError

__all__ = [
    "DENSE_CAP",
    "EigenPairs",
    "as_dense_sym",
    "sym_eig",
    "gen_sym_eig",
    "orthonormalize",
    "OrthoResult",
    "sym_funm",
]

DENSE_CAP = 2000
DROP_TOL = 1e-10


@dataclass(frozen=True)
class EigenPairs:
    values: np.ndarray
    vectors: np.ndarray

    def __iter__(self):
        yield self.values
        yield self.vectors


def as_dense_sym(A) -> np.ndarray:
    """Dense copy of ``A`` symmetrized as (A + A^T) / 2."""
    if sp.issparse(A):
        A = A.toarray()
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgument(f"expected a square matrix, got shape {A.shape}")
    return 0.5 * (A + A.T)


def sym_eig(A, cap: int = DENSE_CAP) -> EigenPairs:
    """Full eigendecomposition of a symmetric matrix, values ascending."""
    A = as_dense_sym(A)
    if A.shape[0] > cap:
        raise ResourceLimit(f"dense eigensolve of size {A.shape[0]} exceeds cap {cap}")
    values, vectors = sla.eigh(A)
    return EigenPairs(values, vectors)


def gen_sym_eig(K, M, cap: int = DENSE_CAP) -> EigenPairs:
    """Solve K u = lambda M u with U^T M U = I.

    Raises ValidationError if M is not positive definite.
    """
    K = as_dense_sym(K)
    M = as_dense_sym(M)
    if K.shape != M.shape:
        raise InvalidArgument(f"shape mismatch {K.shape} vs {M.shape}")
    if K.shape[0] > cap:
        raise ResourceLimit(f"dense eigensolve of size {K.shape[0]} exceeds cap {cap}")
    try:
        C = sla.cholesky(M, lower=True)
    except sla.LinAlgError as exc:
        raise ValidationError("mass matrix is not positive definite") from exc
    X = sla.solve_triangular(C, K, lower=True)
    A = sla.solve_triangular(C, X.T, lower=True)
    values, V = sla.eigh(0.5 * (A + A.T))
    U = sla.solve_triangular(C.T, V, lower=False)
    return EigenPairs(values, U)


def sym_funm(A, f) -> np.ndarray:
    """f(A) for symmetric A via diagonalization."""
    lam, Q = sym_eig(A)
    return (Q * f(lam)) @ Q.T


@dataclass(frozen=True)
class OrthoResult:
    basis: np.ndarray
    kept: tuple
    dropped: tuple


def _apply(M, v):
    return v if M is None else M @ v


def orthonormalize(vectors, M=None, drop_tol: float = DROP_TOL) -> OrthoResult:
    """M-orthonormalize ``vectors`` by modified Gram-Schmidt with a second pass.

    ``vectors`` is a sequence of 1-D arrays or a 2-D array whose columns are
    the vectors.  A vector whose component orthogonal to the current basis
    has M-norm below ``drop_tol`` times its own M-norm is dropped; zero
    vectors are always dropped.  The result reports kept and dropped indices.
    """
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        cols = [vectors[:, j] for j in range(vectors.shape[1])]
        n = vectors.shape[0]
    else:
        cols = [np.asarray(v, dtype=float) for v in vectors]
        n = cols[0].shape[0] if cols else 0
    basis: list[np.ndarray] = []
    kept, dropped = [], []
    for idx, v in enumerate(cols):
        v = np.array(v, dtype=float)
        norm0 = np.sqrt(max(float(v @ _apply(M, v)), 0.0))
        if norm0 == 0.0 or not np.isfinite(norm0):
            dropped.append(idx)
            continue
        for _ in range(2):
            for q in basis:
                v -= float(q @ _apply(M, v)) * q
        nrm = np.sqrt(max(float(v @ _apply(M, v)), 0.0))
        if nrm < drop_tol * norm0:
            dropped.append(idx)
            continue
        basis.append(v / nrm)
        kept.append(idx)
    W = np.column_stack(basis) if basis else np.zeros((n, 0))
    return OrthoResult(W, tuple(kept), tuple(dropped))
