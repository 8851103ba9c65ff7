"""Programmatic problem builders shared by the test modules."""

from __future__ import annotations

import numpy as np

from nonlocal_evolution.certificates import KamkeFunction, TubeRadius
from nonlocal_evolution.evolution import CoefficientFamily
from nonlocal_evolution.grid import TimeGrid
from nonlocal_evolution.nonlinearity import GrowthEnvelope, Nonlinearity
from nonlocal_evolution.nonlocal_map import NonlocalMap
from nonlocal_evolution.problem import ProblemSpec, SolverConfig


def const(c):
    return lambda t: np.full(np.shape(t), float(c))


def family(A, d, a):
    if callable(A):
        return CoefficientFamily(d, a, A)
    return CoefficientFamily.constant(np.asarray(A, dtype=float).reshape(d, d), a)


def scalar_problem(
    A=-1.0,
    f=lambda t, x: np.ones_like(x),
    points=((1.0, 0.5),),
    delta=1.0,
    psi=1.0,
    gamma=0.0,
    R=2.0,
    a=1.0,
    n=200,
    kernel=None,
    theta=None,
    omega=None,
    tol=1e-10,
    max_iter=500,
    damping=1.0,
    F=None,
    norm="ell2",
):
    grid = TimeGrid(a, n)
    if kernel is not None:
        P = Nonlinearity.integro_volterra(f, kernel)
    elif theta is not None:
        P = Nonlinearity.deviated_argument(f, theta)
    else:
        P = Nonlinearity.superposition(f)
    if F is None:
        F = NonlocalMap.multipoint(points, 1) if points else NonlocalMap.zero(1)
    E = GrowthEnvelope(
        delta if callable(delta) else const(delta),
        psi if callable(psi) else const(psi),
        gamma if callable(gamma) else const(gamma),
    )
    return ProblemSpec(
        grid,
        family(A, 1, a),
        P,
        F,
        (E,),
        TubeRadius((R,)),
        norm,
        omega=KamkeFunction.linear(omega) if omega is not None and not callable(omega) else omega,
        solver=SolverConfig(tol, max_iter, damping),
    )


def general_problem(A, P, F, envelopes, radii, partition=(), a=1.0, n=200, norm="ell2",
                    gamma_blocks=None, tol=1e-10, max_iter=500, damping=1.0):
    d = F.d
    return ProblemSpec(
        TimeGrid(a, n),
        family(A, d, a),
        P,
        F,
        tuple(envelopes),
        TubeRadius(tuple(radii)),
        norm,
        tuple(partition),
        gamma_blocks,
        solver=SolverConfig(tol, max_iter, damping),
    )


def env(delta, psi, gamma=0.0):
    return GrowthEnvelope(
        delta if callable(delta) else const(delta),
        psi if callable(psi) else const(psi),
        gamma if callable(gamma) else const(gamma),
    )
