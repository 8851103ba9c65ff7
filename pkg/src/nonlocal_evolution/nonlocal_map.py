"""Linear nonlocal conditions ``u(0) = F(u)`` and their resolvent.

Both the multi-point form ``F(u) = sum_k C_k u(t_k)`` and the discretised
Stieltjes form ``F(u) = sum_i W_i u(t_i)`` are stored the same way: a list of
times with a d x d coefficient matrix attached to each.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .evolution import EvolutionTable
from .grid import OffGridError, Trajectory
from .numerics import NormKind, SingularMatrixError, inv, op_norm


class NonlocalKind(str, enum.Enum):
    MULTIPOINT = "multipoint"
    QUADRATURE = "quadrature"
    ZERO = "zero"


class H2ViolationError(ArithmeticError):
    """``x -> x - F(T(., 0) x)`` is not invertible."""


@dataclass(frozen=True, eq=False)
class NonlocalMap:
    kind: NonlocalKind
    times: np.ndarray
    coeffs: np.ndarray = field(repr=False)  # (m, d, d)
    d: int = 1
    partition: tuple = ()

    def __post_init__(self):
        kind = NonlocalKind(self.kind)
        object.__setattr__(self, "kind", kind)
        times = np.asarray(self.times, dtype=float).reshape(-1)
        coeffs = np.asarray(self.coeffs, dtype=float).reshape(len(times), self.d, self.d)
        if kind is NonlocalKind.ZERO:
            times, coeffs = np.zeros(0), np.zeros((0, self.d, self.d))
        elif kind is NonlocalKind.MULTIPOINT:
            if len(times) == 0:
                raise ValueError("a multi-point condition needs at least one point")
            if np.any(np.diff(times) <= 0):
                raise ValueError("multi-point times must be strictly increasing")
            if times[0] <= 0:
                raise ValueError("multi-point times must lie in (0, a]")
            if not np.any(coeffs):
                raise ValueError("a multi-point condition needs a nonzero coefficient")
        else:
            if np.any(np.diff(times) <= 0) or (len(times) and times[0] < 0):
                raise ValueError("quadrature nodes must be increasing and nonnegative")
        partition = tuple(self.partition) or (self.d,)
        if sum(partition) != self.d:
            raise ValueError(f"partition {partition} does not cover dimension {self.d}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "partition", partition)

    @classmethod
    def zero(cls, d: int = 1, partition=()) -> "NonlocalMap":
        return cls(NonlocalKind.ZERO, [], np.zeros((0, d, d)), d, partition)

    @classmethod
    def multipoint(cls, points, d: int = 1, partition=()) -> "NonlocalMap":
        """``points`` is a sequence of ``(t_k, C_k)``; scalar ``C_k`` means ``c_k I``."""
        times = [float(t) for t, _ in points]
        coeffs = [_as_matrix(C, d) for _, C in points]
        return cls(NonlocalKind.MULTIPOINT, times, np.array(coeffs), d, partition)

    @classmethod
    def quadrature(cls, nodes, weights, d: int = 1, partition=()) -> "NonlocalMap":
        coeffs = [_as_matrix(W, d) for W in weights]
        return cls(NonlocalKind.QUADRATURE, nodes, np.array(coeffs).reshape(-1, d, d), d, partition)

    def coefficient_norm_sum(self, norm_kind) -> float:
        return float(sum(op_norm(C, norm_kind) for C in self.coeffs))

    @property
    def blocks(self) -> list[slice]:
        out, start = [], 0
        for size in self.partition:
            out.append(slice(start, start + size))
            start += size
        return out


def _as_matrix(C, d: int) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.ndim == 0:
        return float(C) * np.eye(d)
    return C.reshape(d, d)


def support(F: NonlocalMap) -> tuple[float, tuple]:
    """Total support ``a_F`` and the per-component supports ``(a_1, ..., a_n)``."""
    per = []
    for blk in F.blocks:
        hits = [t for t, C in zip(F.times, F.coeffs) if np.any(C[:, blk] != 0)]
        per.append(max(hits) if hits else 0.0)
    nz = [t for t, C in zip(F.times, F.coeffs) if np.any(C != 0)]
    a_F = max(nz) if nz else 0.0
    return float(a_F), tuple(float(a) for a in per)


def truncate(v: Trajectory, a_F: float) -> Trajectory:
    """``v`` on ``[0, a_F]``, frozen at ``v(a_F)`` afterwards."""
    i = v.grid.index_of(a_F)
    vals = np.array(v.values)
    vals[i + 1 :] = vals[i]
    return Trajectory(v.grid, vals)


def truncate_blocks(v: Trajectory, supports, blocks) -> Trajectory:
    """Component-wise truncation, block ``j`` frozen after ``supports[j]``."""
    vals = np.array(v.values)
    for a_j, blk in zip(supports, blocks):
        i = v.grid.index_of(a_j)
        vals[i + 1 :, blk] = vals[i, blk]
    return Trajectory(v.grid, vals)


def apply_F(F: NonlocalMap, v: Trajectory) -> np.ndarray:
    if F.kind is NonlocalKind.ZERO or len(F.times) == 0:
        return np.zeros(F.d)
    vals = v.at(F.times)
    return np.einsum("kab,kb->a", F.coeffs, vals)


def nodal_coefficients(F: NonlocalMap, grid) -> np.ndarray:
    """Coefficient matrix attached to every grid node, shape ``(n+1, d, d)``.

    Only valid when all condition times are grid nodes.
    """
    W = np.zeros((grid.n_steps + 1, F.d, F.d))
    for t, C in zip(F.times, F.coeffs):
        W[grid.index_of(t)] += C
    return W


@dataclass(frozen=True, eq=False)
class Resolvent:
    B: np.ndarray
    F_of_T0: np.ndarray
    BF_norm_upper: float
    contraction_margin: float
    coeff_norm_sum: float


def build_resolvent(F: NonlocalMap, tab: EvolutionTable) -> Resolvent:
    """``B = (I - F(T(., 0)))^-1`` plus the bound ``|BF| <= |B| sum_k |C_k|``."""
    nk = tab.norm_kind
    d = F.d
    F_T0 = np.zeros((d, d))
    for t, C in zip(F.times, F.coeffs):
        try:
            i = tab.grid.index_of(t)
        except OffGridError as exc:
            raise OffGridError(f"nonlocal time {t} must be a grid node") from exc
        F_T0 += C @ tab.U[i]
    try:
        B = inv(np.eye(d) - F_T0)
    except SingularMatrixError as exc:
        raise H2ViolationError(
            "I - F(T(., 0)) is singular, so the nonlocal problem has no resolvent"
        ) from exc
    csum = F.coefficient_norm_sum(nk)
    return Resolvent(
        B=B,
        F_of_T0=F_T0,
        BF_norm_upper=op_norm(B, nk) * csum,
        contraction_margin=1.0 - tab.M * csum,
        coeff_norm_sum=csum,
    )


def block_norms(F: NonlocalMap, B: np.ndarray, norm_kind=NormKind.ELL2) -> np.ndarray:
    """Upper bounds ``|G_ij| <= sum_k |(B C_k)_ij|`` for ``G = BF``."""
    blocks = F.blocks
    n = len(blocks)
    G = np.zeros((n, n))
    for C in F.coeffs:
        BC = B @ C
        for i, bi in enumerate(blocks):
            for j, bj in enumerate(blocks):
                G[i, j] += op_norm(BC[bi, bj], norm_kind)
    return G
