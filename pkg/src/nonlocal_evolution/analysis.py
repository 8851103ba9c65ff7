"""Assemble the full certificate report for a :class:`ProblemSpec`."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .certificates import (
    CertificateReport,
    ReportEntry,
    build_H,
    check_c7_c8,
    check_c9,
    check_c13,
    check_rem21,
    check_system,
    kamke_decay,
    kamke_entry,
)
from .evolution import EvolutionTable, build_evolution, component_bounds
from .nonlocal_map import H2ViolationError, Resolvent, block_norms, build_resolvent, support
from .numerics import op_norm
from .problem import ProblemSpec


@dataclass
class Certification:
    report: CertificateReport
    tab: EvolutionTable
    res: Optional[Resolvent]
    a_F: float = 0.0
    supports: tuple = ()
    M_i: tuple = ()
    r: tuple = ()
    H: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict)

    @property
    def rho(self) -> float:
        return self.report.get("mm").lhs if self.report.has("mm") else float("nan")


def certify(spec: ProblemSpec, tab: Optional[EvolutionTable] = None) -> Certification:
    tab = tab if tab is not None else build_evolution(spec.A, spec.grid, spec.norm_kind)
    report = CertificateReport()
    grid = spec.grid
    M = tab.M
    try:
        res = build_resolvent(spec.F, tab)
    except H2ViolationError as exc:
        report.add(ReportEntry("h2", 0.0, 0.0, 0.0, notes=str(exc)))
        return Certification(report, tab, None)
    # in the Euclidean norm 1/|B| is the smallest singular value of I - F(T(., 0))
    gap = 1.0 / op_norm(res.B, spec.norm_kind)
    report.add(ReportEntry("h2", gap, 0.0, gap, notes="1/|B|"))
    report.add(check_rem21(M, res.coeff_norm_sum))
    a_F, per = support(spec.F)
    BF = res.BF_norm_upper
    n = spec.n_components
    if n == 1:
        E = spec.E[0]
        c7, c8, r = check_c7_c8(E, spec.tube, M, BF, a_F, grid)
        report.add(c7, c8)
        R = spec.tube.values(grid)
        if np.all(R == R[0]):
            report.add(check_c9(E.psi, float(R[0]), M, BF, E.delta, a_F, grid.a, grid))
        report.add(check_c13(spec.gamma_blocks[0][0], M, BF, a_F, grid))
        H, mm = build_H([[BF]], spec.gamma_blocks, (a_F,), a_F, (M,), grid)
        report.add(_advisory(mm, "scalar case: equals the c13 left side"))
        if spec.omega is not None:
            report.add(kamke_entry(kamke_decay(spec.omega, spec.tube, M, BF, a_F, grid)))
        return Certification(report, tab, res, a_F, (a_F,), (M,), (r,), H)
    M_i = tuple(component_bounds(tab, spec.partition))
    G = block_norms(spec.F, res.B, spec.norm_kind)
    entries, r = check_system(spec.E, spec.tube, M_i, G, per, grid)
    report.add(*entries)
    H, mm = build_H(G, spec.gamma_blocks, per, a_F, M_i, grid)
    report.add(mm)
    return Certification(report, tab, res, a_F, per, M_i, tuple(r), H, {"G": G})


def _advisory(e: ReportEntry, note: str) -> ReportEntry:
    notes = f"{e.notes}; {note}" if e.notes else note
    return ReportEntry(e.condition_id, e.lhs, e.rhs, e.margin, e.tol, e.component, False, notes)
