"""Small dense linear algebra: norms, inverses and spectral radii.

Everything here works on plain numpy arrays of shape ``(d,)`` or ``(d, d)``.
Eigen/SVD routines from numpy are deliberately not used; the quantities the
certificates need (operator norms, Perron roots, inverses) are computed by
power iteration and Gaussian elimination so that their tolerances are ours.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

PIVOT_THRESHOLD = 1e-14
POWER_RTOL = 1e-12
POWER_MAX_ITER = 10_000
SQUARING_STEPS = 64


class NormKind(str, enum.Enum):
    ELL1 = "ell1"
    ELL2 = "ell2"
    ELLINF = "ellinf"


class NumericsError(Exception):
    pass


class ConvergenceError(NumericsError):
    """Power iteration did not reach its tolerance; carries the last iterate."""

    def __init__(self, message, last_iterate=None, last_estimate=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.last_estimate = last_estimate


class SingularMatrixError(NumericsError):
    def __init__(self, pivot_index, pivot_value):
        super().__init__(
            f"matrix is singular: pivot {pivot_index} has magnitude "
            f"{abs(pivot_value):.3e} < {PIVOT_THRESHOLD:g}"
        )
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value


class DomainError(NumericsError, ValueError):
    pass


class ConsistencyError(NumericsError):
    pass


def _kind(k) -> NormKind:
    return k if isinstance(k, NormKind) else NormKind(k)


def vec_norm(x, k=NormKind.ELL2) -> float:
    x = np.asarray(x, dtype=float)
    k = _kind(k)
    if k is NormKind.ELL1:
        return float(np.sum(np.abs(x)))
    if k is NormKind.ELLINF:
        return float(np.max(np.abs(x))) if x.size else 0.0
    return float(np.sqrt(np.sum(x * x)))


def vec_norms(X, k=NormKind.ELL2) -> np.ndarray:
    """Row-wise norms of a stack of vectors, shape ``(..., d) -> (...)``."""
    X = np.asarray(X, dtype=float)
    k = _kind(k)
    if k is NormKind.ELL1:
        return np.sum(np.abs(X), axis=-1)
    if k is NormKind.ELLINF:
        return np.max(np.abs(X), axis=-1)
    return np.sqrt(np.sum(X * X, axis=-1))


def op_norm(A, k=NormKind.ELL2) -> float:
    """Induced operator norm of a (possibly rectangular) matrix."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {A.shape}")
    return float(op_norms(A[None], k)[0])


def op_norms(As, k=NormKind.ELL2) -> np.ndarray:
    """Induced norms of a batch of matrices, shape ``(m, p, q) -> (m,)``.

    The ell2 norm is the square root of the top eigenvalue of ``G = A^T A``.
    Plain power iteration stalls when the top two singular values nearly tie
    (propagators close to the identity do this), so ``G`` is instead squared
    repeatedly with trace normalisation. After ``k`` squarings the unwanted
    directions are damped by ``(lambda_2/lambda_1)^(2^k)``; the dominant column
    then gives a Rayleigh quotient against the original ``G``.
    """
    As = np.asarray(As, dtype=float)
    k = _kind(k)
    if As.shape[0] == 0:
        return np.zeros(0)
    if k is NormKind.ELL1:
        return np.max(np.sum(np.abs(As), axis=-2), axis=-1)
    if k is NormKind.ELLINF:
        return np.max(np.sum(np.abs(As), axis=-1), axis=-1)

    if As.shape[-1] == 1 or As.shape[-2] == 1:
        return np.linalg.norm(As.reshape(As.shape[0], -1), axis=-1)
    G = np.swapaxes(As, -1, -2) @ As
    m = G.shape[0]
    tr = np.einsum("mii->m", G)
    zero = tr == 0.0
    tr[zero] = 1.0
    S = G / tr[:, None, None]
    active = np.arange(m)
    for _ in range(SQUARING_STEPS):
        Sa = S[active]
        S2 = Sa @ Sa
        t2 = np.einsum("mii->m", S2)
        t2[t2 == 0.0] = 1.0
        S2 /= t2[:, None, None]
        moved = np.max(np.abs(S2 - Sa), axis=(-1, -2)) > 1e-16
        S[active] = S2
        active = active[moved]
        if active.size == 0:
            break
    cols = np.linalg.norm(S, axis=-2)
    best = np.argmax(cols, axis=-1)
    x = S[np.arange(m), :, best]
    nx = np.linalg.norm(x, axis=-1)
    nx[nx == 0.0] = 1.0
    x = x / nx[:, None]
    # two ordinary power steps polish the direction
    for _ in range(2):
        y = np.einsum("mij,mj->mi", G, x)
        ny = np.linalg.norm(y, axis=-1)
        ny[ny == 0.0] = 1.0
        x = y / ny[:, None]
    lam = np.einsum("mi,mij,mj->m", x, G, x)
    lam[zero] = 0.0
    return np.sqrt(np.maximum(lam, 0.0))


def inv(A) -> np.ndarray:
    """Inverse by Gauss-Jordan elimination with partial pivoting."""
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"inv needs a square matrix, got shape {A.shape}")
    n = A.shape[0]
    aug = np.hstack([A, np.eye(n)])
    for col in range(n):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if abs(aug[piv, col]) < PIVOT_THRESHOLD:
            raise SingularMatrixError(col, aug[piv, col])
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        aug[col] /= aug[col, col]
        others = np.arange(n) != col
        aug[others] -= np.outer(aug[others, col], aug[col])
    return aug[:, n:]


def _check_nonneg_square(H) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise DomainError("matrix has non-finite entries")
    if np.any(H < 0):
        raise DomainError("spectral_radius is defined here for nonnegative matrices only")
    return H


def _radius_by_squaring(H, squarings=48) -> float:
    # rho = lim |H^k|^(1/k); track log-scale so H^(2^j) never overflows
    nrm = np.max(np.sum(H, axis=1))
    if nrm == 0.0:
        return 0.0
    P = H / nrm
    log_scale = np.log(nrm)
    for j in range(1, squarings + 1):
        P = P @ P
        s = np.max(np.sum(P, axis=1))
        if s == 0.0:
            return 0.0
        P /= s
        log_scale = 2.0 * log_scale + np.log(s)
    return float(np.exp(log_scale / 2.0**squarings))


def spectral_radius(H) -> float:
    """Perron root of a nonnegative square matrix.

    Power iteration on the shifted matrix ``H + c I`` (``c`` = max row sum)
    with Collatz-Wielandt bounds ``min (Hx)_i/x_i <= rho <= max (Hx)_i/x_i``
    as the stopping test. When the bounds stall (reducible ``H``) the
    estimate falls back to ``|H^k|^(1/k)`` via repeated squaring.
    """
    H = _check_nonneg_square(H)
    n = H.shape[0]
    c = float(np.max(np.sum(H, axis=1)))
    if c == 0.0:
        return 0.0
    x = np.ones(n)
    best_gap = np.inf
    stall = 0
    for _ in range(POWER_MAX_ITER):
        y = H @ x
        if np.all(x > 0):
            ratios = y / x
            lo, hi = float(ratios.min()), float(ratios.max())
            if hi - lo <= POWER_RTOL * hi:
                return 0.5 * (lo + hi)
            gap = hi - lo
            if gap < 0.999 * best_gap:
                best_gap, stall = gap, 0
            else:
                stall += 1
            if stall > 50:
                break
        else:
            break
        x = y + c * x
        x /= np.max(x)
    return _radius_by_squaring(H)


def mat_power(H, k: int) -> np.ndarray:
    """``H**k`` by binary exponentiation."""
    H = np.asarray(H, dtype=float)
    result = np.eye(H.shape[0])
    base = H.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        while k > 0:
            if k & 1:
                result = result @ base
            k >>= 1
            if k:
                base = base @ base
    return result


@dataclass(frozen=True)
class RadiusTrio:
    rho: float
    powers_vanish: bool
    inverse_nonneg: bool

    @property
    def agree(self) -> bool:
        return (self.rho < 1.0) == self.powers_vanish == self.inverse_nonneg


def check_radius_trio(H, k_max: int = 2**20) -> RadiusTrio:
    """Evaluate the three equivalent forms of ``rho(H) < 1`` independently.

    ``powers_vanish`` tests ``|H^k_max|_inf < 1e-6``; ``inverse_nonneg`` tests
    that ``(I - H)^-1`` exists with entries ``>= -1e-12``. The default
    ``k_max`` is large enough to separate radii within 1e-3 of one.
    """
    H = _check_nonneg_square(H)
    if k_max < 1:
        raise ValueError("k_max must be a positive integer")
    rho = spectral_radius(H)
    Hk = mat_power(H, k_max)
    with np.errstate(invalid="ignore"):
        vanish = bool(np.all(np.isfinite(Hk)) and op_norm(Hk, NormKind.ELLINF) < 1e-6)
    n = H.shape[0]
    try:
        R = inv(np.eye(n) - H)
        nonneg = bool(np.all(R >= -1e-12))
    except SingularMatrixError as exc:
        if rho < 1.0 - 1e-3:
            raise ConsistencyError(
                f"I - H is singular although rho(H) = {rho:.6g} < 1"
            ) from exc
        nonneg = False
    return RadiusTrio(rho=rho, powers_vanish=vanish, inverse_nonneg=nonneg)
