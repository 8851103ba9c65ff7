"""Mild-solution operator ``N = N1 + N2`` and damped Picard iteration.

``N2(u)(t) = int_0^t T(t,s) Phi(u)(s) ds`` and
``N1(u)(t) = T(t,0) B F(chi(N2 u))`` where ``chi`` freezes each component
after its own support. Since ``T(t_i, s_j) = U_i U_j^-1``, the trapezoid sum
in ``N2`` factors as ``U_i * cumtrapz(U_j^-1 Phi_j)``, which costs O(n d^2)
instead of O(n^2 d^2).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .evolution import EvolutionTable, build_evolution
from .grid import Trajectory, trapezoid_cumulative
from .nonlinearity import PhiEvaluationError, PhiKind, eval_phi_all, kernel_table
from .nonlocal_map import Resolvent, apply_F, build_resolvent, support, truncate_blocks
from .problem import ProblemSpec, SolverConfig

DIVERGENCE_FACTOR = 1e6


class DivergenceError(RuntimeError):
    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = tuple(history)


@dataclass(frozen=True, eq=False)
class SolveResult:
    u: Trajectory
    residual_history: tuple
    converged: bool
    iterations: int
    boundary_defect: float
    tube_ok: bool
    tube_excess: float = 0.0

    @property
    def residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else 0.0


class MildOperator:
    """``N`` for one problem with the evolution table and resolvent cached."""

    def __init__(self, spec: ProblemSpec, tab: Optional[EvolutionTable] = None,
                 res: Optional[Resolvent] = None):
        self.spec = spec
        self.tab = tab if tab is not None else build_evolution(spec.A, spec.grid, spec.norm_kind)
        self.res = res if res is not None else build_resolvent(spec.F, self.tab)
        self.a_F, per = support(spec.F)
        # the scalar case truncates at a_F; systems truncate component j at a_j
        self.supports = per if spec.n_components > 1 else (self.a_F,)
        self._K = None
        if spec.P.kind is PhiKind.INTEGRO_VOLTERRA:
            self._K = kernel_table(spec.P, spec.grid, spec.d)

    @property
    def B(self) -> np.ndarray:
        return self.res.B

    def phi(self, u: Trajectory) -> np.ndarray:
        return eval_phi_all(self.spec.P, u, self._K)

    def n2_values(self, u: Trajectory) -> np.ndarray:
        tab = self.tab
        y = np.einsum("iab,ib->ia", tab.U_inv, self.phi(u))
        acc = trapezoid_cumulative(y, tab.grid.h)
        return np.einsum("iab,ib->ia", tab.U, acc)

    def n1_from_n2(self, v: np.ndarray) -> np.ndarray:
        spec = self.spec
        if not len(spec.F.times):
            return np.zeros_like(v)
        vt = truncate_blocks(Trajectory(spec.grid, v), self.supports, spec.blocks)
        c = self.B @ apply_F(spec.F, vt)
        return np.einsum("iab,b->ia", self.tab.U, c)

    def __call__(self, u: Trajectory) -> np.ndarray:
        v = self.n2_values(u)
        return self.n1_from_n2(v) + v


def apply_N2(spec: ProblemSpec, tab: EvolutionTable, B, u: Trajectory) -> Trajectory:
    op = MildOperator(spec, tab, _res(spec, tab, B))
    return Trajectory(spec.grid, op.n2_values(u))


def apply_N1(spec: ProblemSpec, tab: EvolutionTable, B, u: Trajectory) -> Trajectory:
    op = MildOperator(spec, tab, _res(spec, tab, B))
    return Trajectory(spec.grid, op.n1_from_n2(op.n2_values(u)))


def apply_N(spec: ProblemSpec, tab: EvolutionTable, B, u: Trajectory) -> Trajectory:
    return Trajectory(spec.grid, MildOperator(spec, tab, _res(spec, tab, B))(u))


def _res(spec, tab, B) -> Resolvent:
    if B is None:
        return build_resolvent(spec.F, tab)
    if isinstance(B, Resolvent):
        return B
    return Resolvent(np.asarray(B, dtype=float), np.zeros_like(B), np.nan, np.nan, np.nan)


def residual(spec: ProblemSpec, tab: EvolutionTable, B, u: Trajectory) -> float:
    """``max_i |u(t_i) - N(u)(t_i)|`` in the product norm."""
    Nu = MildOperator(spec, tab, _res(spec, tab, B))(u)
    return float(np.max(spec.norms(u.values - Nu)))


def boundary_defect(spec: ProblemSpec, u: Trajectory) -> float:
    return float(spec.norms(u.values[0] - apply_F(spec.F, u))[0])


def tube_check(spec: ProblemSpec, u: Trajectory, tol: float) -> tuple[bool, float]:
    """``|u_i(t)| <= R_i(t) + tol`` at every node; returns the flag and worst excess."""
    norms = spec.component_norms(u.values)
    worst = -np.inf
    for i in range(spec.n_components):
        worst = max(worst, float(np.max(norms[:, i] - spec.tube.values(spec.grid, i))))
    return bool(worst <= tol), worst


def picard_solve(spec: ProblemSpec, config: Optional[SolverConfig] = None,
                 op: Optional[MildOperator] = None) -> SolveResult:
    """Damped Picard iteration ``u <- (1-theta) u + theta N(u)`` from ``u = 0``.

    Returns the first iterate whose residual ``|u - N(u)|`` is within
    ``tol``. Non-convergence after ``max_iter`` evaluations of ``N`` yields
    ``converged = False``; growth of the residual beyond ``1e6`` times the
    first one raises :class:`DivergenceError`.
    """
    cfg = config or spec.solver
    op = op or MildOperator(spec)
    theta = cfg.damping
    u = np.zeros((spec.grid.n_steps + 1, spec.d))
    history = []
    converged = False
    for _ in range(cfg.max_iter):
        try:
            with np.errstate(all="ignore"):
                Nu = op(Trajectory(spec.grid, u))
        except PhiEvaluationError as exc:
            if "non-finite" not in str(exc):
                raise
            raise DivergenceError(f"iterate became non-finite: {exc}", history) from exc
        if not np.all(np.isfinite(Nu)):
            raise DivergenceError("iterate became non-finite", history)
        res = float(np.max(spec.norms(u - Nu)))
        history.append(res)
        if res <= cfg.tol:
            converged = True
            break
        if res > DIVERGENCE_FACTOR * max(history[0], 1e-300):
            raise DivergenceError(
                f"residual grew from {history[0]:.3e} to {res:.3e}", history
            )
        u = (1.0 - theta) * u + theta * Nu
    traj = Trajectory(spec.grid, u)
    ok, excess = tube_check(spec, traj, cfg.tol)
    return SolveResult(
        u=traj,
        residual_history=tuple(history),
        converged=converged,
        iterations=len(history),
        boundary_defect=boundary_defect(spec, traj),
        tube_ok=ok,
        tube_excess=excess,
    )
