import math

import numpy as np
import pytest

from builders import scalar_problem
from nonlocal_evolution.evolution import CoefficientFamily
from nonlocal_evolution.grid import TimeGrid
from nonlocal_evolution.nonlinearity import Nonlinearity
from nonlocal_evolution.oracle import (
    OracleDivergenceError,
    OracleRefusal,
    closed_form_affine,
    ivp_solve,
    shooting_solve,
)

LIN = Nonlinearity.superposition(lambda t, x: np.zeros_like(x))


def test_ivp_exponential():
    g = TimeGrid(1.0, 100)
    u = ivp_solve(CoefficientFamily.constant([[-1.0]], 1.0), LIN, [1.0], g)
    assert np.max(np.abs(u.values[:, 0] - np.exp(-g.nodes))) <= 1e-8


def test_ivp_logistic():
    g = TimeGrid(1.0, 100)
    P = Nonlinearity.superposition(lambda t, x: x * (1 - x))
    u = ivp_solve(CoefficientFamily.constant([[0.0]], 1.0), P, [0.1], g)
    exact = 1 / (1 + 9 * np.exp(-g.nodes))
    assert np.max(np.abs(u.values[:, 0] - exact)) <= 1e-6


def test_ivp_fourth_order():
    P = Nonlinearity.superposition(lambda t, x: np.cos(t)[:, None] * x)
    errs = []
    for n in (20, 40, 80):
        g = TimeGrid(1.0, n)
        u = ivp_solve(CoefficientFamily.constant([[0.0]], 1.0), P, [1.0], g)
        errs.append(abs(u.values[-1, 0] - math.exp(math.sin(1.0))))
    slopes = [math.log2(errs[k] / errs[k + 1]) for k in range(2)]
    assert all(abs(s - 4) <= 0.3 for s in slopes)


def test_ivp_integro_second_order():
    # u' = int_0^t u ds, u(0) = 1  ->  u = cosh t
    P = Nonlinearity.integro_volterra(lambda t, x: np.zeros_like(x), lambda t, s: 1.0)
    errs = []
    for n in (40, 80):
        g = TimeGrid(1.0, n)
        u = ivp_solve(CoefficientFamily.constant([[0.0]], 1.0), P, [1.0], g)
        errs.append(np.max(np.abs(u.values[:, 0] - np.cosh(g.nodes))))
    assert errs[1] <= 1e-4
    assert math.log2(errs[0] / errs[1]) >= 1.8


def test_ivp_blowup():
    P = Nonlinearity.superposition(lambda t, x: x**2)
    with pytest.raises(OracleDivergenceError):
        ivp_solve(CoefficientFamily.constant([[0.0]], 2.0), P, [1.0], TimeGrid(2.0, 400))


def test_shooting_closed_form():
    spec = scalar_problem(n=400)
    u = shooting_solve(spec)
    u0, exact = closed_form_affine(-1.0, 1.0, 0.5, 1.0)
    assert abs(u.values[0, 0] - u0) <= 1e-8
    assert np.max(np.abs(u.values[:, 0] - exact(spec.grid.nodes))) <= 1e-8


def test_closed_form_values():
    u0, u = closed_form_affine(-1.0, 1.0, 0.5, 1.0)
    e = math.exp(-1)
    assert u0 == pytest.approx(0.5 * (1 - e) / (1 - 0.5 * e), rel=1e-15)
    assert float(u(1.0)) * 0.5 == pytest.approx(u0, rel=1e-14)
    u0, u = closed_form_affine(0.0, 1.0, 0.5, 1.0)
    assert u0 == pytest.approx(1.0)


def test_refuses_deviated_argument():
    spec = scalar_problem(theta=lambda t: 1.0 - t)
    with pytest.raises(OracleRefusal):
        shooting_solve(spec)
    with pytest.raises(OracleRefusal):
        ivp_solve(spec.A, spec.P, [0.0], spec.grid)


def test_expm_examples():
    from nonlocal_evolution.oracle import expm

    assert np.array_equal(expm(np.zeros((3, 3))), np.eye(3))
    assert np.allclose(expm(np.diag([1.0, -2.0])), np.diag(np.exp([1.0, -2.0])), rtol=1e-14)
    R = expm(np.array([[0.0, math.pi], [-math.pi, 0.0]]))
    assert np.max(np.abs(R + np.eye(2))) <= 1e-9


def test_shooting_agrees_with_picard_on_linear_problem():
    from nonlocal_evolution.solver import picard_solve

    spec = scalar_problem(A=-0.5, f=lambda t, x: 0.3 * x + np.cos(t)[:, None], points=((0.5, 0.4),), n=100)
    a = picard_solve(spec).u.values
    b = shooting_solve(spec).values
    assert np.max(np.abs(a - b)) <= 10 * spec.grid.h**2
