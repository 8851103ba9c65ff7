"""Functional nonlinearities ``Phi`` and their growth envelopes.

All callables are vectorised: ``f(t, x)`` receives ``t`` of shape ``(m,)``
and ``x`` of shape ``(m, d)`` and returns ``(m, d)``; ``kernel(t, s)`` maps
``(m,)`` arrays to ``(m, d, d)``; ``theta``, ``delta``, ``psi`` and ``gamma``
map arrays to arrays of the same shape.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .expr import ExprError
from .grid import TimeGrid, Trajectory, trapezoid
from .numerics import NormKind, vec_norms


class PhiKind(str, enum.Enum):
    SUPERPOSITION = "superposition"
    INTEGRO_VOLTERRA = "integro_volterra"
    DEVIATED_ARGUMENT = "deviated_argument"


class PhiEvaluationError(ArithmeticError):
    def __init__(self, message, t=None):
        super().__init__(message if t is None else f"{message} (at t = {t:.6g})")
        self.t = t


def _zero_f(t, x):
    return np.zeros_like(x)


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    kind: PhiKind
    f: Callable = _zero_f
    kernel: Optional[Callable] = None
    theta: Optional[Callable] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PhiKind(self.kind))
        if self.kind is PhiKind.INTEGRO_VOLTERRA and self.kernel is None:
            raise ValueError("integro-Volterra nonlinearity needs a kernel")
        if self.kind is PhiKind.DEVIATED_ARGUMENT and self.theta is None:
            raise ValueError("deviated-argument nonlinearity needs theta")

    @classmethod
    def superposition(cls, f) -> "Nonlinearity":
        return cls(PhiKind.SUPERPOSITION, f)

    @classmethod
    def integro_volterra(cls, f, kernel) -> "Nonlinearity":
        return cls(PhiKind.INTEGRO_VOLTERRA, f, kernel=kernel)

    @classmethod
    def deviated_argument(cls, f, theta) -> "Nonlinearity":
        return cls(PhiKind.DEVIATED_ARGUMENT, f, theta=theta)

    @property
    def causal(self) -> bool:
        return self.kind is not PhiKind.DEVIATED_ARGUMENT


def _call_f(P: Nonlinearity, t, x):
    try:
        with np.errstate(all="ignore"):
            out = np.asarray(P.f(t, x), dtype=float)
    except ExprError as exc:
        raise PhiEvaluationError(f"f failed: {exc.message}", _first(t)) from exc
    out = np.broadcast_to(out, x.shape)
    bad = ~np.all(np.isfinite(out), axis=-1)
    if np.any(bad):
        raise PhiEvaluationError("f produced a non-finite value", float(np.asarray(t)[bad][0]))
    return out


def _first(t):
    t = np.atleast_1d(t)
    return float(t[0]) if t.size else None


def _kernel_vals(P: Nonlinearity, t, s, d: int) -> np.ndarray:
    try:
        with np.errstate(all="ignore"):
            vals = np.asarray(P.kernel(t, s), dtype=float)
    except ExprError as exc:
        raise PhiEvaluationError(f"kernel failed: {exc.message}", _first(t)) from exc
    m = len(t)
    if vals.size == 1:
        vals = np.full((m, d, d), float(vals.reshape(-1)[0]))
    vals = vals.reshape(m, d, d)
    if not np.all(np.isfinite(vals)):
        raise PhiEvaluationError("kernel produced a non-finite value")
    return vals


def kernel_table(P: Nonlinearity, grid: TimeGrid, d: int) -> np.ndarray:
    """``k(t_i, s_j)`` on the lower triangle, zero above; ``(n+1, n+1, d, d)``."""
    nodes = grid.nodes
    ii, jj = np.tril_indices(len(nodes))
    K = np.zeros((len(nodes), len(nodes), d, d))
    K[ii, jj] = _kernel_vals(P, nodes[ii], nodes[jj], d)
    return K


def trapezoid_weights(n1: int, h: float) -> np.ndarray:
    """Row ``i`` holds the composite trapezoid weights on nodes ``0..i``."""
    W = np.tril(np.full((n1, n1), h))
    W[:, 0] *= 0.5
    W[np.arange(n1), np.arange(n1)] *= 0.5
    W[0, 0] = 0.0
    return W


def eval_phi_all(P: Nonlinearity, u: Trajectory, kernel_cache=None) -> np.ndarray:
    """``Phi(u)(t_i)`` at every grid node, shape ``(n+1, d)``."""
    grid = u.grid
    t = grid.nodes
    if P.kind is PhiKind.DEVIATED_ARGUMENT:
        with np.errstate(all="ignore"):
            th = np.broadcast_to(np.asarray(P.theta(t), dtype=float), t.shape)
        if np.any(th < -1e-12) or np.any(th > grid.a + 1e-12) or not np.all(np.isfinite(th)):
            bad = t[~((th >= -1e-12) & (th <= grid.a + 1e-12))][0]
            raise PhiEvaluationError("theta(t) leaves [0, a]", float(bad))
        x = u.at(np.clip(th, 0.0, grid.a))
    else:
        x = u.values
    out = _call_f(P, t, x)
    if P.kind is PhiKind.INTEGRO_VOLTERRA:
        K = kernel_cache if kernel_cache is not None else kernel_table(P, grid, u.d)
        # integrand[i, j] = k(t_i, s_j) u(s_j) for j <= i
        integrand = np.einsum("ijab,jb->ija", K, u.values)
        out_integral = np.einsum("ij,ija->ia", trapezoid_weights(len(t), grid.h), integrand)
        out = out + out_integral
    return out


def eval_phi(P: Nonlinearity, u: Trajectory, t: float) -> np.ndarray:
    i = u.grid.index_of(t)
    if P.kind is PhiKind.INTEGRO_VOLTERRA:
        nodes = u.grid.nodes[: i + 1]
        ti = np.full(i + 1, nodes[-1])
        Ki = _kernel_vals(P, ti, nodes, u.d)
        vals = np.einsum("jab,jb->ja", Ki, u.values[: i + 1])
        local = _call_f(P, np.array([t]), u.values[i : i + 1])[0]
        return local + np.atleast_1d(trapezoid(vals, u.grid.h))
    return eval_phi_all(P, u)[i]


@dataclass(frozen=True, eq=False)
class GrowthEnvelope:
    """Bound ``|Phi(u)(t)| <= delta(t) psi(|u(t)|)`` plus the Kamke slope ``gamma``."""

    delta: Callable
    psi: Callable
    gamma: Callable = lambda t: np.zeros_like(np.asarray(t, dtype=float))


def _vals(fn, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.broadcast_to(np.asarray(fn(x), dtype=float), x.shape).copy()


def sample_monotone(psi, upper: float, n: int = 10_000, tol: float = 1e-12) -> None:
    """Reject ``psi`` if it decreases by more than ``tol`` on ``[0, upper]``."""
    s = np.linspace(0.0, upper, n)
    v = _vals(psi, s)
    drops = np.diff(v)
    if np.any(drops < -tol):
        k = int(np.argmin(drops))
        raise ValueError(f"psi decreases between s = {s[k]:.6g} and s = {s[k + 1]:.6g}")
    if np.any(v[1:] <= 0):
        raise ValueError("psi must be positive for s > 0")


def audit_envelope(
    P: Nonlinearity,
    E: GrowthEnvelope,
    tube,
    grid: TimeGrid,
    d: int,
    trials: int = 64,
    seed: int = 0,
    norm_kind=NormKind.ELL2,
) -> float:
    """Worst observed ``|Phi(u)(t)| - delta(t) psi(|u(t)|)`` over random
    trajectories inside the tube ``|u(t)| <= R(t)``.

    A nonpositive result means no violation was found; it is not a proof.
    ``tube`` is a callable ``R(t)`` (vectorised).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    t = grid.nodes
    R = _vals(tube, t)
    delta = _vals(E.delta, t)
    worst = -np.inf
    for k in range(trials):
        direction = rng.standard_normal((len(t), d))
        norms = vec_norms(direction, norm_kind)
        norms[norms == 0] = 1.0
        # half of the trials hug the tube boundary, where growth bounds bite
        radius = np.ones(len(t)) if k % 2 == 0 else rng.uniform(0.0, 1.0, len(t))
        x = direction / norms[:, None] * (radius * R)[:, None]
        u = Trajectory(grid, x)
        phi = eval_phi_all(P, u)
        lhs = vec_norms(phi, norm_kind)
        rhs = delta * _vals(E.psi, vec_norms(u.values, norm_kind))
        worst = max(worst, float(np.max(lhs - rhs)))
    return worst
