"""Reference solvers kept deliberately separate from ``evolution``/``solver``.

Nothing here reuses the propagator, quadrature or resolvent code of the main
pipeline, so agreement between the two is evidence rather than tautology.
Linear solves use :func:`numpy.linalg.solve` rather than the in-house
Gauss-Jordan routine for the same reason.
"""

from __future__ import annotations

import math

import numpy as np

from .grid import TimeGrid, Trajectory
from .nonlinearity import Nonlinearity, PhiKind

BLOWUP = 1e12
FD_STEP = 1e-6
NEWTON_MAX_STEPS = 50


class OracleDivergenceError(RuntimeError):
    pass


class NoRootError(RuntimeError):
    pass


class OracleRefusal(ValueError):
    """The oracle does not handle non-causal nonlinearities."""


def _f(P: Nonlinearity, t: float, x: np.ndarray) -> np.ndarray:
    out = np.asarray(P.f(np.array([t]), x[None, :]), dtype=float)
    return np.broadcast_to(out, (1, len(x)))[0]


def _k(P: Nonlinearity, t: float, s: np.ndarray, d: int) -> np.ndarray:
    vals = np.asarray(P.kernel(np.full(len(s), t), s), dtype=float)
    if vals.size == 1:
        return np.full((len(s), d, d), float(vals.reshape(-1)[0]))
    return vals.reshape(len(s), d, d)


def ivp_solve(A, P: Nonlinearity, u0, grid: TimeGrid) -> Trajectory:
    """Classical RK4 for ``u' = A(t) u + Phi(u)(t)``, ``u(0) = u0``.

    For the integro term, ``int_0^tau k(tau, s) u(s) ds`` at a stage time
    ``tau`` in ``[t_i, t_i + h]`` is the trapezoid sum over the accepted
    nodes plus one partial panel ending at the stage value.
    """
    if P.kind is PhiKind.DEVIATED_ARGUMENT:
        raise OracleRefusal("ivp_solve handles causal nonlinearities only")
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    d = len(u0)
    n, h = grid.n_steps, grid.a / grid.n_steps
    t_nodes = np.array([k * h for k in range(n + 1)])
    out = np.zeros((n + 1, d))
    out[0] = u0
    integro = P.kind is PhiKind.INTEGRO_VOLTERRA

    def rhs(i, tau, x):
        val = np.asarray(A(tau), dtype=float).reshape(d, d) @ x + _f(P, tau, x)
        if integro:
            K = _k(P, tau, t_nodes[: i + 1], d)
            terms = np.einsum("jab,jb->ja", K, out[: i + 1])
            acc = np.zeros(d)
            if i > 0:
                acc = h * (terms[: i + 1].sum(axis=0) - 0.5 * (terms[0] + terms[i]))
            dt = tau - t_nodes[i]
            if dt > 0:
                k_end = _k(P, tau, np.array([tau]), d)[0]
                acc += 0.5 * dt * (terms[i] + k_end @ x)
            val = val + acc
        return val

    for i in range(n):
        t, x = t_nodes[i], out[i]
        k1 = rhs(i, t, x)
        k2 = rhs(i, t + h / 2, x + h / 2 * k1)
        k3 = rhs(i, t + h / 2, x + h / 2 * k2)
        k4 = rhs(i, t + h, x + h * k3)
        out[i + 1] = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(out[i + 1])) or np.max(np.abs(out[i + 1])) > BLOWUP:
            raise OracleDivergenceError(f"IVP solution blew up near t = {t_nodes[i + 1]:.6g}")
    return Trajectory(grid, out)


def _apply_condition(F, traj: Trajectory) -> np.ndarray:
    nodes = traj.grid.nodes
    acc = np.zeros(traj.d)
    for t, C in zip(F.times, F.coeffs):
        x = np.array([np.interp(t, nodes, traj.values[:, c]) for c in range(traj.d)])
        acc += C @ x
    return acc


def shooting_solve(spec, grid: TimeGrid | None = None, newton_tol: float = 1e-12) -> Trajectory:
    """Root of ``g(u0) = u0 - F(ivp(u0))`` by damped Newton.

    The Jacobian is a forward difference with absolute step ``1e-6``; steps
    are halved until ``|g|`` decreases.
    """
    if not spec.P.causal:
        raise OracleRefusal("shooting needs a causal nonlinearity; deviated arguments look ahead")
    grid = grid or spec.grid
    d = spec.d

    def g(x):
        traj = ivp_solve(spec.A, spec.P, x, grid)
        return x - _apply_condition(spec.F, traj), traj

    x = np.zeros(d)
    gx, traj = g(x)
    for _ in range(NEWTON_MAX_STEPS):
        norm = float(np.max(np.abs(gx)))
        if norm <= newton_tol * max(1.0, float(np.max(np.abs(x)))):
            return traj
        J = np.empty((d, d))
        for c in range(d):
            e = np.zeros(d)
            e[c] = FD_STEP
            J[:, c] = (g(x + e)[0] - gx) / FD_STEP
        try:
            step = np.linalg.solve(J, -gx)
        except np.linalg.LinAlgError as exc:
            raise NoRootError("singular shooting Jacobian") from exc
        lam = 1.0
        while lam > 1e-6:
            try:
                gn, tn = g(x + lam * step)
            except OracleDivergenceError:
                gn = None
            if gn is not None and float(np.max(np.abs(gn))) < norm:
                break
            lam *= 0.5
        else:
            # no decrease: accept only if already at round-off level
            if norm <= 1e3 * newton_tol * max(1.0, float(np.max(np.abs(x)))):
                return traj
            raise NoRootError(f"Newton stagnated at |g| = {norm:.3e}")
        x, gx, traj = x + lam * step, gn, tn
    if float(np.max(np.abs(gx))) <= newton_tol * max(1.0, float(np.max(np.abs(x)))):
        return traj
    raise NoRootError(f"no root after {NEWTON_MAX_STEPS} Newton steps (|g| = {np.max(np.abs(gx)):.3e})")


def expm(A) -> np.ndarray:
    """Matrix exponential by scaling and squaring around a degree-6 Taylor core.

    The matrix is scaled until its infinity norm is at most 1/64, which keeps
    the truncation error of the core below about 1e-16 relative.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[0]
    norm = float(np.max(np.sum(np.abs(A), axis=1))) if d else 0.0
    s = 0 if norm <= 1 / 64 else int(math.ceil(math.log2(norm * 64)))
    X = A / (2.0**s)
    term = np.eye(d)
    E = np.eye(d)
    for k in range(1, 7):
        term = term @ X / k
        E = E + term
    for _ in range(s):
        E = E @ E
    return E


def closed_form_affine(lam: float, beta: float, c: float, t1: float):
    """Exact solution of ``u' = lam u + beta``, ``u(0) = c u(t1)`` (scalar).

    Returns ``(u0, u)`` with ``u`` a vectorised function of ``t``.
    """
    def g(t):
        t = np.asarray(t, dtype=float)
        return beta * t if lam == 0 else beta * np.expm1(lam * t) / lam

    u0 = c * float(g(t1)) / (1.0 - c * math.exp(lam * t1))

    def u(t):
        return np.exp(lam * np.asarray(t, dtype=float)) * u0 + g(t)

    return u0, u
