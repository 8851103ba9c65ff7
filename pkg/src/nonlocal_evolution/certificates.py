"""Numerical evaluation of the sufficient existence conditions.

Every check returns :class:`ReportEntry` objects carrying the computed left
and right hand sides, the margin (positive means the strict inequality
holds) and a quadrature tolerance. All ``L^1`` norms use the composite
trapezoid rule on the problem grid; the tolerance is the one-level
Richardson estimate ``4/3 |I_h - I_{h/2}|`` obtained by re-evaluating the
integrand on the grid refined once.

Condition ids:

* ``h2``     resolvent ``B`` exists
* ``rem21``  ``M sum_k |C_k| < 1`` (sufficient for ``h2``)
* ``c7``     ``r = M^2 |BF| |delta psi(R)|_{L1(0,a_F)} < min R``
* ``c8``     ``int_r^{R(t)} dtau/psi(tau) >= M |delta|_{L1(0,t)}`` for all t
* ``c9``     constant tube: ``R/psi(R) >= M^2|BF||delta|_{L1(0,a_F)} + M|delta|_{L1(0,a)}``
* ``c13``    ``(2 M^2 |BF| + 2 M) |gamma|_{L1(0,a_F)} < 1``
* ``rr1``    per-component analogue of ``c7`` for systems
* ``h3sys``  per-component analogue of ``c8`` for systems
* ``mm``     ``rho(H) < 1`` with ``H = 2(|G| |gamma~| + |gamma|)``
* ``kamke``  comparison iteration decays to zero (supporting evidence only)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .grid import TimeGrid, trapezoid, trapezoid_cumulative
from .numerics import ConsistencyError, DomainError, spectral_radius

EPS_LOWER = 1e-12
INV_PSI_RTOL = 1e-8
KAMKE_ZERO = 1e-10
ROUNDOFF_RTOL = 1e-12

CONDITION_IDS = ("h2", "rem21", "c7", "c8", "c9", "c13", "rr1", "h3sys", "mm", "kamke")


def _vals(fn, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.isscalar(fn) or isinstance(fn, (int, float)):
        return np.full(x.shape, float(fn))
    return np.broadcast_to(np.asarray(fn(x), dtype=float), x.shape).copy()


def _fine(grid: TimeGrid) -> TimeGrid:
    return TimeGrid(grid.a, 2 * grid.n_steps)


def _clean_tol(tol, value) -> float:
    """Differences at round-off level are not quadrature error."""
    tol = abs(float(tol))
    return 0.0 if tol <= ROUNDOFF_RTOL * max(abs(float(value)), 1e-300) else tol


def l1_norm(g, grid: TimeGrid, upto: float) -> tuple[float, float]:
    """Trapezoid ``|g|_{L1(0, upto)}`` on grid nodes and its error estimate."""
    i = grid.index_of(upto)
    if i == 0:
        return 0.0, 0.0
    coarse = trapezoid(np.abs(_vals(g, grid.nodes)), grid.h, i)
    fg = _fine(grid)
    fine = trapezoid(np.abs(_vals(g, fg.nodes)), fg.h, 2 * i)
    return coarse, _clean_tol(4.0 / 3.0 * (coarse - fine), coarse)


def l1_cumulative(g, grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """``|g|_{L1(0, t_i)}`` for every node and the per-node error estimate."""
    coarse = trapezoid_cumulative(np.abs(_vals(g, grid.nodes)), grid.h)
    fg = _fine(grid)
    fine = trapezoid_cumulative(np.abs(_vals(g, fg.nodes)), fg.h)[::2]
    tol = np.array([_clean_tol(4.0 / 3.0 * (c - f), c) for c, f in zip(coarse, fine)])
    return coarse, tol


# -- report ------------------------------------------------------------------


@dataclass(frozen=True)
class ReportEntry:
    condition_id: str
    lhs: float
    rhs: float
    margin: float
    tol: float = 0.0
    component: Optional[int] = None
    required: bool = True
    notes: str = ""

    @property
    def status(self) -> str:
        if self.margin > self.tol:
            return "pass"
        if self.tol > 0 and self.margin >= -self.tol:
            return "marginal"
        return "fail"

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    @property
    def label(self) -> str:
        if self.component is None:
            return self.condition_id
        return f"{self.condition_id}[{self.component + 1}]"


def fmt(x) -> str:
    """17 significant digits; ``inf``/``-inf``/``nan`` spelled out."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


REPORT_HEADER = "condition_id,lhs,rhs,margin,pass,status,required,notes"


@dataclass
class CertificateReport:
    entries: list = field(default_factory=list)

    def add(self, *entries: ReportEntry) -> None:
        self.entries.extend(entries)

    def get(self, condition_id: str, component: Optional[int] = None) -> ReportEntry:
        for e in self.entries:
            if e.condition_id == condition_id and e.component == component:
                return e
        raise KeyError((condition_id, component))

    def has(self, condition_id: str) -> bool:
        return any(e.condition_id == condition_id for e in self.entries)

    @property
    def all_pass(self) -> bool:
        return all(e.passed for e in self.entries if e.required)

    def exit_code(self) -> int:
        statuses = {e.status for e in self.entries if e.required}
        if "fail" in statuses:
            return 2
        if "marginal" in statuses:
            return 3
        return 0

    def lines(self) -> list[str]:
        out = [REPORT_HEADER]
        for e in self.entries:
            notes = e.notes.replace(",", ";")
            out.append(
                f"{e.label},{fmt(e.lhs)},{fmt(e.rhs)},{fmt(e.margin)},"
                f"{'true' if e.passed else 'false'},{e.status},"
                f"{'required' if e.required else 'advisory'},{notes}"
            )
        return out


# -- tube and Kamke data -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class TubeRadius:
    """Time-dependent radii ``R_i(t) > 0``, one callable per component."""

    R: tuple

    def __post_init__(self):
        R = self.R
        if callable(R) or np.isscalar(R):
            R = (R,)
        object.__setattr__(self, "R", tuple(R))

    @classmethod
    def constant(cls, *radii: float) -> "TubeRadius":
        return cls(tuple(float(r) for r in radii))

    def __len__(self):
        return len(self.R)

    def values(self, grid: TimeGrid, component: int = 0) -> np.ndarray:
        v = _vals(self.R[component], grid.nodes)
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise DomainError(f"tube radius R_{component + 1} must be positive on the grid")
        return v

    def fn(self, component: int = 0) -> Callable:
        R = self.R[component]
        return R if callable(R) else (lambda t, _r=float(R): np.full(np.shape(t), _r))


@dataclass(frozen=True, eq=False)
class KamkeFunction:
    """``omega(t, s)`` on the undergraph ``0 <= s <= 2 R(t)``; ``eta`` optional."""

    omega: Callable
    eta: Optional[Callable] = None

    @classmethod
    def linear(cls, gamma) -> "KamkeFunction":
        return cls(lambda t, s: _vals(gamma, t) * s, eta=None)


# -- integral of 1/psi -------------------------------------------------------


def _inv_psi_segment(psi, lo: float, hi: float) -> tuple[float, float]:
    """``int_lo^hi dtau / psi(tau)`` for ``0 < lo, hi``.

    Composite trapezoid in ``x = log(tau)`` (integrand ``e^x / psi(e^x)``),
    doubling the panel count until the relative change is below
    ``INV_PSI_RTOL``. Returns the value and the last change.
    """
    if lo == hi:
        return 0.0, 0.0
    sign = 1.0
    if hi < lo:
        lo, hi, sign = hi, lo, -1.0
    xl, xh = math.log(lo), math.log(hi)
    n = 16
    prev = None
    while True:
        x = np.linspace(xl, xh, n + 1)
        tau = np.exp(x)
        p = _vals(psi, tau)
        if np.any(p <= 0) or not np.all(np.isfinite(p)):
            bad = tau[~(p > 0)][0] if np.any(~(p > 0)) else tau[0]
            raise DomainError(f"psi must be positive on [{lo:.6g}, {hi:.6g}]; psi({bad:.6g}) <= 0")
        val = trapezoid(tau / p, (xh - xl) / n)
        if prev is not None:
            change = abs(val - prev)
            if change <= INV_PSI_RTOL * abs(val) or n >= 2**22:
                return sign * val, change
        prev = val
        n *= 2


def inv_psi_integrals(psi, lower: float, uppers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``int_lower^{U} dtau/psi`` for every ``U`` in ``uppers``.

    The distinct upper limits are sorted and integrated segment by segment,
    so a time-dependent tube costs one sweep over ``[lower, max R]``.
    """
    uppers = np.asarray(uppers, dtype=float)
    uniq = np.unique(uppers)
    vals = np.empty(len(uniq))
    errs = np.empty(len(uniq))
    # segments below `lower` are integrated backwards from `lower`
    below = uniq[uniq < lower][::-1]
    above = uniq[uniq >= lower]
    acc, err, cur = 0.0, 0.0, lower
    for u in above:
        v, e = _inv_psi_segment(psi, cur, u)
        acc, err, cur = acc + v, err + e, u
        k = np.searchsorted(uniq, u)
        vals[k], errs[k] = acc, err
    acc, err, cur = 0.0, 0.0, lower
    for u in below:
        v, e = _inv_psi_segment(psi, cur, u)
        acc, err, cur = acc + v, err + e, u
        k = np.searchsorted(uniq, u)
        vals[k], errs[k] = acc, err
    idx = np.searchsorted(uniq, uppers)
    return vals[idx], errs[idx]


# -- scalar conditions -------------------------------------------------------


def _integral_condition(cid, psi, R_vals, r, M, delta, grid, component=None) -> ReportEntry:
    """``int_r^{R(t)} dtau/psi >= M |delta|_{L1(0,t)}`` at every node."""
    rhs_all, rhs_tol = l1_cumulative(delta, grid)
    rhs_all = M * rhs_all
    rhs_tol = M * rhs_tol
    lower = r if r > 0 else EPS_LOWER
    lhs_all, lhs_err = inv_psi_integrals(psi, lower, R_vals)
    margins = lhs_all - rhs_all
    k = int(np.argmin(margins))
    tol = float(rhs_tol[k] + lhs_err[k] + INV_PSI_RTOL * abs(lhs_all[k]))
    notes = f"binding t = {grid.nodes[k]:.6g}"
    margin = float(margins[k])
    if r == 0 and margin >= 0:
        margin = math.inf
        notes = f"r = 0: int from {EPS_LOWER:g} already dominates; +inf sentinel"
    return ReportEntry(cid, float(lhs_all[k]), float(rhs_all[k]), margin, tol, component, notes=notes)


def check_c7_c8(E, tube, M: float, BF_norm: float, a_F: float, grid: TimeGrid):
    """Tube radius check ``c7`` and integral check ``c8``; returns ``(c7, c8, r)``."""
    tube = tube if isinstance(tube, TubeRadius) else TubeRadius(tube)
    R_vals = tube.values(grid)
    Rfn = tube.fn()

    def dpsiR(t):
        return _vals(E.delta, t) * _vals(E.psi, _vals(Rfn, t))

    L, L_tol = l1_norm(dpsiR, grid, a_F)
    r = M * M * BF_norm * L
    minR = float(np.min(R_vals))
    c7 = ReportEntry("c7", r, minR, minR - r, M * M * BF_norm * L_tol, notes=f"r = {fmt(r)}")
    c8 = _integral_condition("c8", E.psi, R_vals, r, M, E.delta, grid)
    return c7, c8, r


def check_c9(psi, R: float, M: float, BF_norm: float, delta, a_F: float, a: float, grid: TimeGrid):
    """Constant-radius check ``c9``."""
    pR = float(_vals(psi, np.array(R)))
    if pR <= 0:
        raise DomainError(f"psi(R) = {pR} must be positive")
    lhs = R / pR
    LF, tF = l1_norm(delta, grid, a_F)
    La, ta = l1_norm(delta, grid, a)
    rhs = M * M * BF_norm * LF + M * La
    return ReportEntry("c9", lhs, rhs, lhs - rhs, M * M * BF_norm * tF + M * ta, required=False)


def check_c13(gamma, M: float, BF_norm: float, a_F: float, grid: TimeGrid) -> ReportEntry:
    L, tol = l1_norm(gamma, grid, a_F)
    factor = 2 * M * M * BF_norm + 2 * M
    lhs = factor * L
    return ReportEntry("c13", lhs, 1.0, 1.0 - lhs, factor * tol)


def check_rem21(M: float, coeff_norm_sum: float) -> ReportEntry:
    lhs = M * coeff_norm_sum
    return ReportEntry("rem21", lhs, 1.0, 1.0 - lhs, required=False,
                       notes="sufficient for h2 only")


# -- systems -----------------------------------------------------------------


def check_system(envelopes, tubes, M_i, G_norms, supports, grid: TimeGrid):
    """Checks ``rr1`` and ``h3sys``, per component.

    Returns ``(entries, r)`` with one ``rr1`` and one ``h3sys`` entry per
    component and the vector ``r_i = M_i sum_j |G_ij| M_j |delta_j psi_j(R_j)|_{L1(0,a_j)}``.
    """
    tubes = tubes if isinstance(tubes, TubeRadius) else TubeRadius(tuple(tubes))
    n = len(envelopes)
    G = np.asarray(G_norms, dtype=float).reshape(n, n)
    L = np.zeros(n)
    Lt = np.zeros(n)
    for j, E in enumerate(envelopes):
        Rj = tubes.fn(j)

        def dpsiR(t, E=E, Rj=Rj):
            return _vals(E.delta, t) * _vals(E.psi, _vals(Rj, t))

        L[j], Lt[j] = l1_norm(dpsiR, grid, supports[j])
    entries = []
    r = np.zeros(n)
    for i in range(n):
        r[i] = M_i[i] * sum(G[i, j] * M_i[j] * L[j] for j in range(n))
        tol = M_i[i] * sum(G[i, j] * M_i[j] * Lt[j] for j in range(n))
        R_vals = tubes.values(grid, i)
        minR = float(np.min(R_vals))
        entries.append(ReportEntry("rr1", r[i], minR, minR - r[i], tol, i, notes=f"r = {fmt(r[i])}"))
        entries.append(
            _integral_condition("h3sys", envelopes[i].psi, R_vals, r[i], M_i[i],
                                envelopes[i].delta, grid, component=i)
        )
    return entries, r


def build_H(G_norms, gamma_blocks, supports, a_F: float, M_i, grid: TimeGrid):
    """Comparison matrix ``H = 2(|G| |gamma~| + |gamma|)`` and the ``mm`` entry.

    ``|G|_ij = M_i |G_ij|``, ``|gamma|_ij = M_i |gamma_ij|_{L1(0,a_F)}`` and
    ``|gamma~|_ij = M_i |gamma_ij|_{L1(0,a_i)}`` (the truncation uses the
    support of the row's own variable).
    """
    n = len(M_i)
    M = np.asarray(M_i, dtype=float)
    G = M[:, None] * np.asarray(G_norms, dtype=float).reshape(n, n)
    gam = np.zeros((n, n))
    gam_t = np.zeros((n, n))
    tol = np.zeros((n, n))
    tol_t = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            gam[i, j], tol[i, j] = l1_norm(gamma_blocks[i][j], grid, a_F)
            upto = min(supports[i], a_F)
            gam_t[i, j], tol_t[i, j] = l1_norm(gamma_blocks[i][j], grid, upto)
    gam *= M[:, None]
    gam_t *= M[:, None]
    H = 2.0 * (G @ gam_t + gam)
    notes = ""
    if all(abs(a - a_F) <= 1e-12 for a in supports):
        H_alt = 2.0 * (G + np.eye(n)) @ gam
        diff = float(np.max(np.abs(H - H_alt))) if n else 0.0
        if diff > 1e-12 * max(1.0, float(np.max(np.abs(H)))):
            raise ConsistencyError(f"collapsed H differs from the general formula by {diff:.3e}")
        notes = f"equal supports: H = 2(|G|+I)|gamma| agrees (diff {diff:.1e})"
    rho = spectral_radius(H)
    E = 2.0 * (G @ (M[:, None] * tol_t) + M[:, None] * tol)
    tol_rho = spectral_radius(H + E) - rho if np.any(E) else 0.0
    return H, ReportEntry("mm", rho, 1.0, 1.0 - rho, max(tol_rho, 0.0), notes=notes)


# -- Kamke comparison iteration ---------------------------------------------


@dataclass(frozen=True)
class KamkeResult:
    converged_to_zero: bool
    final_sup: float
    history: tuple
    iterations: int
    final_sup_on_support: float
    notes: str = ""


def kamke_decay(w: KamkeFunction, tube, M: float, BF_norm: float, a_F: float,
                grid: TimeGrid, max_iter: int = 100) -> KamkeResult:
    """Monotone iteration of the comparison inequality from the ceiling ``2R``.

    ``phi_{k+1}(t) = 2 M^2 |BF| int_0^{a_F} omega(s, phi_k) ds
    + 2 M int_0^t omega(s, phi_k) ds``, clipped so ``phi_{k+1} <= phi_k``.
    Decay to zero supports uniqueness of the zero solution; stalling is
    inconclusive unless ``omega`` is linear.
    """
    tube = tube if isinstance(tube, TubeRadius) else TubeRadius(tube)
    t = grid.nodes
    ceiling = 2.0 * tube.values(grid)
    iF = grid.index_of(a_F)
    phi = ceiling.copy()
    history = []
    clamped = False
    converged = False
    k = 0
    for k in range(1, max_iter + 1):
        s = np.clip(phi, 0.0, ceiling)
        clamped |= bool(np.any(s != phi))
        om = _vals(lambda x: w.omega(t, x), s)
        if np.any(om < 0):
            raise DomainError("omega must be nonnegative")
        cum = trapezoid_cumulative(om, grid.h)
        new = 2.0 * M * M * BF_norm * cum[iF] + 2.0 * M * cum
        phi = np.minimum(new, phi)
        sup = float(np.max(phi))
        history.append(sup)
        if sup <= KAMKE_ZERO:
            converged = True
            break
    notes = "heuristic surrogate for the uniqueness hypothesis"
    if clamped:
        notes += "; omega arguments clamped to [0, 2R]"
    return KamkeResult(converged, float(np.max(phi)), tuple(history), k,
                       float(np.max(phi[: iF + 1])), notes)


def kamke_entry(res: KamkeResult) -> ReportEntry:
    return ReportEntry("kamke", res.final_sup, KAMKE_ZERO, KAMKE_ZERO - res.final_sup,
                       required=False, notes=f"{res.notes}; {res.iterations} iterations")
