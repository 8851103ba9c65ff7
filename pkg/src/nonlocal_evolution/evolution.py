"""Evolution operators ``T(t, s)`` generated by bounded matrix families.

Only ``U_i = T(t_i, 0)`` and their inverses are stored; every propagator is
composed as ``U_i @ inv(U_j)``, which makes the cocycle law hold exactly up
to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import OffGridError, TimeGrid
from .numerics import NormKind, SingularMatrixError, inv, op_norm, op_norms

COCYCLE_SAMPLE_SEED = 20140611


class EvolutionError(RuntimeError):
    pass


@dataclass(frozen=True)
class CoefficientFamily:
    """``t -> A(t)``, a continuous d x d matrix family on ``[0, a]``."""

    d: int
    a: float
    eval: Callable[[float], np.ndarray]

    def __call__(self, t: float) -> np.ndarray:
        A = np.asarray(self.eval(t), dtype=float)
        if A.shape != (self.d, self.d):
            A = np.broadcast_to(A, (self.d, self.d)) if A.size == 1 else A
        if A.shape != (self.d, self.d):
            raise ValueError(f"A({t}) has shape {A.shape}, expected {(self.d, self.d)}")
        if not np.all(np.isfinite(A)):
            raise ValueError(f"A({t}) has non-finite entries")
        return np.array(A)

    @classmethod
    def constant(cls, A, a: float) -> "CoefficientFamily":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        return cls(A.shape[0], a, lambda t: A)


@dataclass(frozen=True, eq=False)
class EvolutionTable:
    grid: TimeGrid
    U: np.ndarray = field(repr=False)
    U_inv: np.ndarray = field(repr=False)
    M: float
    norm_kind: NormKind

    @property
    def d(self) -> int:
        return self.U.shape[1]

    def pair(self, i: int, j: int) -> np.ndarray:
        if i == j:
            return np.eye(self.d)
        if j > i:
            raise ValueError(f"propagator needs s <= t, got node {j} > node {i}")
        return self.U[i] @ self.U_inv[j]


def _rk4_step(A: CoefficientFamily, t: float, h: float, U: np.ndarray) -> np.ndarray:
    A0 = A(t)
    Am = A(t + 0.5 * h)
    A1 = A(t + h)
    k1 = A0 @ U
    k2 = Am @ (U + 0.5 * h * k1)
    k3 = Am @ (U + 0.5 * h * k2)
    k4 = A1 @ (U + h * k3)
    return U + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def pairwise_bound(U, U_inv, norm_kind, rows=None, chunk=20000) -> float:
    """``max_{j <= i} |U_i U_j^-1|`` over all grid pairs (optionally a block).

    For ell2, a first pass brackets every pair between its largest column
    norm and ``min(|P|_F, sqrt(|P|_1 |P|_inf))``; exact norms are then only
    computed for pairs whose upper bracket reaches the best lower bracket.
    """
    if rows is not None:
        U = U[:, rows][:, :, rows]
        U_inv = U_inv[:, rows][:, :, rows]
    n1 = U.shape[0]
    ii, jj = np.tril_indices(n1, k=-1)
    if ii.size == 0:
        return 1.0
    if NormKind(norm_kind) is not NormKind.ELL2:
        best = 1.0
        for lo in range(0, ii.size, chunk):
            P = U[ii[lo : lo + chunk]] @ U_inv[jj[lo : lo + chunk]]
            best = max(best, float(np.max(op_norms(P, norm_kind))))
        return best
    upper = np.empty(ii.size)
    lower = 1.0
    for lo in range(0, ii.size, chunk):
        P = U[ii[lo : lo + chunk]] @ U_inv[jj[lo : lo + chunk]]
        absP = np.abs(P)
        n_1 = np.max(absP.sum(axis=-2), axis=-1)
        n_inf = np.max(absP.sum(axis=-1), axis=-1)
        fro = np.sqrt(np.einsum("mab,mab->m", P, P))
        upper[lo : lo + chunk] = np.minimum(fro, np.sqrt(n_1 * n_inf))
        lower = max(lower, float(np.max(np.linalg.norm(P, axis=-2))))
    cand = np.nonzero(upper >= lower * (1 - 1e-12))[0]
    best = lower
    for lo in range(0, cand.size, chunk):
        c = cand[lo : lo + chunk]
        best = max(best, float(np.max(op_norms(U[ii[c]] @ U_inv[jj[c]], norm_kind))))
    return best


def build_evolution(A: CoefficientFamily, grid: TimeGrid, norm_kind=NormKind.ELL2) -> EvolutionTable:
    """Integrate ``dU/dt = A(t) U, U(0) = I`` with one RK4 step per interval."""
    if abs(grid.a - A.a) > 1e-12 * max(1.0, abs(A.a)):
        raise ValueError(f"grid horizon {grid.a} does not match generator horizon {A.a}")
    norm_kind = NormKind(norm_kind)
    n, d, h = grid.n_steps, A.d, grid.h
    U = np.empty((n + 1, d, d))
    U_inv = np.empty((n + 1, d, d))
    U[0] = np.eye(d)
    U_inv[0] = np.eye(d)
    nodes = grid.nodes
    for i in range(n):
        U[i + 1] = _rk4_step(A, nodes[i], h, U[i])
        try:
            U_inv[i + 1] = inv(U[i + 1])
        except SingularMatrixError as exc:
            raise EvolutionError(
                f"T(t_{i + 1}, 0) is singular at t = {nodes[i + 1]:.6g}; "
                "the grid is too coarse for this generator"
            ) from exc
    M = pairwise_bound(U, U_inv, norm_kind)
    U.setflags(write=False)
    U_inv.setflags(write=False)
    return EvolutionTable(grid, U, U_inv, M, norm_kind)


def propagator(tab: EvolutionTable, t: float, s: float) -> np.ndarray:
    """``T(t, s)`` for grid nodes ``s <= t``."""
    if s > t:
        raise ValueError(f"propagator needs s <= t, got s={s} > t={t}")
    i = tab.grid.index_of(t)
    j = tab.grid.index_of(s)
    return tab.pair(i, j)


def component_bounds(tab: EvolutionTable, partition) -> list[float]:
    """``M_i`` for each diagonal block of a block-diagonal evolution."""
    out = []
    start = 0
    for size in partition:
        rows = np.arange(start, start + size)
        out.append(pairwise_bound(tab.U, tab.U_inv, tab.norm_kind, rows))
        start += size
    return out


def cocycle_defect(tab: EvolutionTable) -> float:
    """Max of ``|T(t,r) T(r,s) - T(t,s)|`` over grid triples.

    All triples when ``n_steps <= 64``, otherwise 1000 random ones drawn
    with a fixed seed.
    """
    n = tab.grid.n_steps
    if n <= 64:
        idx = np.array(
            [(i, k, j) for i in range(n + 1) for k in range(i + 1) for j in range(k + 1)]
        )
    else:
        rng = np.random.default_rng(COCYCLE_SAMPLE_SEED)
        idx = np.sort(rng.integers(0, n + 1, size=(1000, 3)), axis=1)[:, ::-1]
    i, k, j = idx[:, 0], idx[:, 1], idx[:, 2]
    D = _pairs(tab, i, k) @ _pairs(tab, k, j) - _pairs(tab, i, j)
    return float(np.max(op_norms(D, tab.norm_kind)))


def _pairs(tab: EvolutionTable, i, j) -> np.ndarray:
    P = np.einsum("mab,mbc->mac", tab.U[i], tab.U_inv[j])
    P[i == j] = np.eye(tab.d)
    return P


__all__ = [
    "CoefficientFamily",
    "EvolutionTable",
    "EvolutionError",
    "OffGridError",
    "build_evolution",
    "propagator",
    "cocycle_defect",
    "component_bounds",
]
