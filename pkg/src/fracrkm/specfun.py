"""Special functions used by the pole generators.

All elliptic routines take the *modulus* k, not the parameter m = k**2 that
scipy.special and Abramowitz & Stegun tables use.  ``ellipk(m)`` in scipy is
``ellip_K(sqrt(m))`` here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .densecore import sym_eig
from .errors import DomainError, InvalidArgument

__all__ = [
    "QuadratureRule",
    "ellip_K",
    "jacobi_dn",
    "jacobi_sn_cn_dn",
    "gauss_laguerre",
    "zolotarev_rate",
]

_LANDEN_DEPTH = 32
_GL_MAX = 500
_NEAR_ONE = 0.1


def _agm(a: float, b: float) -> float:
    for _ in range(64):
        if abs(a - b) <= 4 * np.finfo(float).eps * a:
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return 0.5 * (a + b)


def _complement(k: float, kp, strict: bool) -> tuple[float, float]:
    """Validate (k, k') and fill in k' = sqrt(1 - k**2) when not supplied.

    Passing k' explicitly avoids the cancellation in 1 - k**2 for k near 1.
    """
    k = float(k)
    hi_ok = k < 1.0 if strict else k <= 1.0
    if kp is None:
        if not (0.0 <= k and hi_ok):
            raise DomainError(f"modulus must lie in [0, 1{')' if strict else ']'}, got {k!r}")
        return k, math.sqrt((1.0 - k) * (1.0 + k))
    kp = float(kp)
    if not (0.0 <= k <= 1.0 and 0.0 <= kp <= 1.0) or (strict and kp == 0.0):
        raise DomainError(f"invalid modulus pair ({k!r}, {kp!r})")
    if abs(k * k + kp * kp - 1.0) > 1e-12:
        raise DomainError(f"k^2 + k'^2 must equal 1, got ({k!r}, {kp!r})")
    return k, kp


def ellip_K(k: float, kp: float | None = None) -> float:
    """Complete elliptic integral of the first kind, modulus convention.

    K(k) = pi / (2 AGM(1, k')) with k' = sqrt(1 - k**2).  The complementary
    modulus ``kp`` may be given directly when k is close to 1.
    """
    k, kp = _complement(k, kp, strict=True)
    if k == 0.0:
        return math.pi / 2
    return math.pi / (2.0 * _agm(1.0, kp))


def jacobi_sn_cn_dn(u, k: float, kp: float | None = None):
    """Jacobi elliptic functions (sn, cn, dn) by the descending Landen/AGM scheme.

    ``u`` may be a scalar or an array; the outputs have the same shape.  The
    complementary modulus ``kp`` may be given directly when k is close to 1.
    """
    k, kp = _complement(k, kp, strict=False)
    u = np.asarray(u, dtype=float)
    if k == 0.0:
        return np.sin(u), np.cos(u), np.ones_like(u)
    if kp < 1e-12:
        sech = 1.0 / np.cosh(u)
        return np.tanh(u), sech, sech

    a = [1.0]
    c = [k]
    b = kp
    eps = np.finfo(float).eps
    for _ in range(_LANDEN_DEPTH):
        if abs(c[-1]) <= eps * a[-1]:
            break
        an, cn_ = 0.5 * (a[-1] + b), 0.5 * (a[-1] - b)
        b = math.sqrt(a[-1] * b)
        a.append(an)
        c.append(cn_)
    n = len(a) - 1
    phi = (2.0**n) * a[n] * u
    phis = [phi]
    for i in range(n, 0, -1):
        phi = 0.5 * (phi + np.arcsin(c[i] * np.sin(phi) / a[i]))
        phis.append(phi)
    phi0 = phis[-1]
    sn = np.sin(phi0)
    cn = np.cos(phi0)
    if kp < _NEAR_ONE:
        # cn loses relative accuracy near u = K when k' is small
        dn = _dn_near_one(u, k, kp)
    else:
        # dn^2 = k'^2 + k^2 cn^2: no cancellation, and no 0/0 where cn vanishes
        dn = np.sqrt(kp * kp + (k * cn) ** 2)
    return sn, cn, dn


def _dn_near_one(u: np.ndarray, k: float, kp: float) -> np.ndarray:
    """dn(u, k) for k' small, by ascending Landen steps down to the sech limit.

    The argument is reduced to [0, K/2] with period 2K, evenness and
    dn(K - u) = k' / dn(u); the back substitution
    dn(z, k) = (1 - k2') (dn2^2 + k2') / (k2^2 dn2) only adds positive terms.
    """
    K = ellip_K(k, kp)
    v = np.mod(np.abs(u), 2.0 * K)
    v = np.where(v > K, 2.0 * K - v, v)
    reflect = v > 0.5 * K
    v = np.where(reflect, K - v, v)
    chain = []
    kk, kkp = k, kp
    while kkp > 1e-15:
        k2p = (kkp / (1.0 + kk)) ** 2
        k2sq = 4.0 * kk / (1.0 + kk) ** 2
        chain.append((k2p, k2sq))
        v = v / (1.0 + k2p)
        kk, kkp = math.sqrt(k2sq), k2p
    dn = 1.0 / np.cosh(v)
    for k2p, k2sq in reversed(chain):
        dn = (1.0 - k2p) * (dn * dn + k2p) / (k2sq * dn)
    return np.where(reflect, kp / dn, dn)


def jacobi_dn(u, k: float, kp: float | None = None):
    """Jacobi dn(u, k) with modulus k in [0, 1]."""
    dn = jacobi_sn_cn_dn(u, k, kp)[2]
    return float(dn) if np.ndim(dn) == 0 else dn


def zolotarev_rate(delta: float) -> float:
    """Rate C* = pi K(mu1) / (4 K(mu)) governing Zolotarev-snapshot convergence.

    ``delta`` is the spectral ratio lambda_min / lambda_max.
    """
    if not (0.0 < delta < 1.0):
        raise DomainError(f"spectral ratio must lie in (0, 1), got {delta!r}")
    sq = math.sqrt(delta)
    mu = ((1.0 - sq) / (1.0 + sq)) ** 2
    one_minus_mu = 4.0 * sq / (1.0 + sq) ** 2
    mu1 = math.sqrt(one_minus_mu * (1.0 + mu))
    return math.pi * ellip_K(mu1, kp=mu) / (4.0 * ellip_K(mu, kp=mu1))


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    kind: str = "laguerre"

    def __len__(self) -> int:
        return len(self.nodes)

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


def _laguerre_scaled(x: float, m: int):
    """Return (log of sum_{i<m} L_i(x)^2, L_m(x)/scale, L_{m-1}(x)/scale).

    Plain three-term recurrence with rescaling so that large nodes of
    high-order rules neither overflow nor lose relative accuracy.
    """
    p_prev, p = 0.0, 1.0
    log_scale = 0.0
    acc = 0.0
    for i in range(m):
        acc += p * p
        p_next = ((2 * i + 1 - x) * p - i * p_prev) / (i + 1)
        p_prev, p = p, p_next
        big = max(abs(p), abs(p_prev))
        if big > 1e100:
            p /= big
            p_prev /= big
            acc /= big * big
            log_scale += math.log(big)
    return math.log(acc) + 2.0 * log_scale, p, p_prev


def gauss_laguerre(m: int) -> QuadratureRule:
    """m-point Gauss-Laguerre rule for the weight exp(-y) on (0, inf).

    Nodes are the eigenvalues of the symmetric tridiagonal Jacobi matrix of
    the Laguerre recurrence (Golub-Welsch), polished by one Newton step.
    Each weight is the squared first component of the normalized eigenvector,
    i.e. 1 / sum_i L_i(x_j)^2, evaluated through the recurrence so that tiny
    weights keep full relative accuracy.
    """
    if not isinstance(m, (int, np.integer)) or not (1 <= m <= _GL_MAX):
        raise InvalidArgument(f"gauss_laguerre needs 1 <= m <= {_GL_MAX}, got {m!r}")
    m = int(m)
    i = np.arange(m)
    jac = np.diag(2.0 * i + 1.0) - np.diag(i[1:].astype(float), 1) - np.diag(i[1:].astype(float), -1)
    nodes = sym_eig(jac).values.copy()
    weights = np.empty(m)
    for j, x in enumerate(nodes):
        _, lm, lm1 = _laguerre_scaled(x, m)
        dlm = m * (lm - lm1) / x
        if dlm != 0.0:
            x = x - lm / dlm
        nodes[j] = x
        log_sum, _, _ = _laguerre_scaled(x, m)
        weights[j] = math.exp(-log_sum)
    return QuadratureRule(nodes=nodes, weights=weights)
