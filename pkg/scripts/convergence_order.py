"""Observed convergence orders of the propagator table and of picard_solve.

    python scripts/convergence_order.py [--grids 20 40 80 160 320]

The propagator against a scaling-and-squaring exponential should show
order 4; the Picard solution of the closed-form nonlocal fixture is limited
by the trapezoid rule inside N2 and should show order 2.
"""

from __future__ import annotations

import argparse
import math
from dataclasses import dataclass, field

import numpy as np

from nonlocal_evolution import (
    CoefficientFamily,
    GrowthEnvelope,
    Nonlinearity,
    NonlocalMap,
    ProblemSpec,
    TimeGrid,
    TubeRadius,
    build_evolution,
    picard_solve,
)
from nonlocal_evolution.numerics import op_norm
from nonlocal_evolution.oracle import closed_form_affine, expm


@dataclass
class Config:
    grids: list = field(default_factory=lambda: [20, 40, 80, 160, 320])
    A: tuple = ((-1.0, 2.0), (-0.5, 0.3))
    lam: float = -1.0
    beta: float = 1.0
    c: float = 0.5


def propagator_errors(cfg: Config):
    A = np.array(cfg.A)
    out = []
    for n in cfg.grids:
        tab = build_evolution(CoefficientFamily.constant(A, 1.0), TimeGrid(1.0, n))
        out.append(max(op_norm(tab.U[i] - expm(A * t)) for i, t in enumerate(tab.grid.nodes)))
    return out


def picard_errors(cfg: Config):
    _, exact = closed_form_affine(cfg.lam, cfg.beta, cfg.c, 1.0)
    one = lambda t: np.ones(np.shape(t))
    out = []
    for n in cfg.grids:
        spec = ProblemSpec(
            TimeGrid(1.0, n),
            CoefficientFamily.constant([[cfg.lam]], 1.0),
            Nonlinearity.superposition(lambda t, x: cfg.beta * np.ones_like(x)),
            NonlocalMap.multipoint([(1.0, cfg.c)], 1),
            (GrowthEnvelope(one, one, lambda t: 0 * one(t)),),
            TubeRadius.constant(10.0),
            "ell2",
        )
        res = picard_solve(spec)
        out.append(float(np.max(np.abs(res.u.values[:, 0] - exact(spec.grid.nodes)))))
    return out


def table(name, grids, errs):
    print(f"{name}")
    print(f"{'n':>6} {'error':>12} {'order':>7}")
    for k, (n, e) in enumerate(zip(grids, errs)):
        order = "" if k == 0 else f"{math.log2(errs[k - 1] / e):7.3f}"
        print(f"{n:6d} {e:12.4e} {order}")
    print()


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--grids", type=int, nargs="+")
    args = p.parse_args()
    cfg = Config(grids=args.grids) if args.grids else Config()
    table("propagator vs expm", cfg.grids, propagator_errors(cfg))
    table("picard_solve vs closed form", cfg.grids, picard_errors(cfg))


if __name__ == "__main__":
    main()
