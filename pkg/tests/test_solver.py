import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import env, general_problem, scalar_problem
from curated import CURATED
from nonlocal_evolution.evolution import build_evolution
from nonlocal_evolution.grid import Trajectory
from nonlocal_evolution.nonlinearity import Nonlinearity
from nonlocal_evolution.nonlocal_map import NonlocalMap
from nonlocal_evolution.oracle import closed_form_affine, ivp_solve, shooting_solve
from nonlocal_evolution.problem import SolverConfig
from nonlocal_evolution.solver import (
    DivergenceError,
    MildOperator,
    apply_N,
    apply_N1,
    apply_N2,
    boundary_defect,
    picard_solve,
    residual,
)


def tab_of(spec):
    return build_evolution(spec.A, spec.grid, spec.norm_kind)


def test_N2_constant_forcing():
    spec = scalar_problem(A=0.0, n=50)
    u = Trajectory.zeros(spec.grid, 1)
    v = apply_N2(spec, tab_of(spec), None, u)
    assert np.max(np.abs(v.values[:, 0] - spec.grid.nodes)) <= 1e-14
    assert v.values[0, 0] == 0.0


def test_N2_exponential_decay():
    spec = scalar_problem(A=-1.0, n=50)
    v = apply_N2(spec, tab_of(spec), None, Trajectory.zeros(spec.grid, 1))
    h = spec.grid.h
    assert np.max(np.abs(v.values[:, 0] - (1 - np.exp(-spec.grid.nodes)))) <= h * h
    assert v.values[0, 0] == 0.0


def test_N1_example_is_one():
    spec = scalar_problem(A=0.0, points=((1.0, 0.5),), n=50)
    w = apply_N1(spec, tab_of(spec), None, Trajectory.zeros(spec.grid, 1))
    assert np.max(np.abs(w.values[:, 0] - 1.0)) <= 1e-14


def test_N1_zero_map():
    spec = scalar_problem(points=(), n=20)
    w = apply_N1(spec, tab_of(spec), None, Trajectory.zeros(spec.grid, 1))
    assert not np.any(w.values)


def test_explicit_B_matrix_is_accepted():
    spec = scalar_problem(A=0.0, points=((1.0, 0.5),), n=20)
    tab = tab_of(spec)
    u = Trajectory.zeros(spec.grid, 1)
    assert np.allclose(apply_N(spec, tab, np.array([[2.0]]), u).values, apply_N(spec, tab, None, u).values)


def block_spec():
    # C couples only into component 1 and reads only component 2
    P = Nonlinearity.superposition(lambda t, x: x + 1.0)
    F = NonlocalMap.multipoint([(0.5, [[0.0, 0.3], [0.0, 0.0]])], 2, (1, 1))
    return general_problem(np.diag([-1.0, -0.5]), P, F, [env(1.0, lambda s: 1 + s, 1.0)] * 2,
                           [5.0, 5.0], partition=(1, 1), n=40)


def test_block_N1_reads_only_coupled_component():
    spec = block_spec()
    tab = tab_of(spec)
    base = Trajectory.zeros(spec.grid, 2)
    N1_0 = apply_N1(spec, tab, None, base).values
    for c in (0, 1):
        vals = np.zeros((spec.grid.n_steps + 1, 2))
        vals[:, c] = np.sin(spec.grid.nodes) + 0.5
        dN1 = apply_N1(spec, tab, None, Trajectory(spec.grid, vals)).values - N1_0
        if c == 0:
            assert np.max(np.abs(dN1)) <= 1e-15
        else:
            assert np.max(np.abs(dN1[:, 0])) > 1e-3
            assert np.max(np.abs(dN1[:, 1])) <= 1e-15


def test_N_is_linear_when_phi_is_linear():
    spec = scalar_problem(A=-0.5, f=lambda t, x: 0.3 * x, points=((0.5, 0.4),), n=40)
    op = MildOperator(spec)
    rng = np.random.default_rng(1)
    x, y = (rng.standard_normal((41, 1)) for _ in range(2))
    lhs = op(Trajectory(spec.grid, 2 * x - 3 * y))
    rhs = 2 * op(Trajectory(spec.grid, x)) - 3 * op(Trajectory(spec.grid, y))
    assert np.max(np.abs(lhs - rhs)) <= 1e-13


def test_zero_phi_converges_in_one_iteration():
    spec = scalar_problem(f=lambda t, x: np.zeros_like(x), delta=0.0)
    out = picard_solve(spec)
    assert out.converged and out.iterations == 1
    assert not np.any(out.u.values)
    assert residual(spec, tab_of(spec), None, out.u) == 0.0


def test_homogeneous_linear_is_zero():
    spec = scalar_problem(A=0.0, f=lambda t, x: 0.5 * x, points=())
    out = picard_solve(spec)
    assert out.converged and not np.any(out.u.values)


def test_closed_form_fixture():
    spec = scalar_problem(n=400)
    out = picard_solve(spec)
    _, exact = closed_form_affine(-1.0, 1.0, 0.5, 1.0)
    assert out.converged
    assert np.max(np.abs(out.u.values[:, 0] - exact(spec.grid.nodes))) <= 1e-6
    assert out.boundary_defect <= 1e-8
    assert out.residual <= spec.solver.tol


def test_shooting_solution_has_small_residual():
    spec = scalar_problem(n=100)
    u = shooting_solve(spec)
    assert residual(spec, tab_of(spec), None, u) <= 5 * spec.grid.h**2


def test_volterra_limit_matches_ivp():
    f = lambda t, x: 0.5 * np.sin(x) + np.cos(t)[:, None]
    for n in (50, 100):
        spec = scalar_problem(A=-0.7, f=f, points=(), n=n)
        out = picard_solve(spec)
        ref = ivp_solve(spec.A, spec.P, [0.0], spec.grid)
        assert out.converged
        assert np.max(np.abs(out.u.values - ref.values)) <= 10 * spec.grid.h**2


def test_divergence_is_reported():
    spec = scalar_problem(A=0.0, f=lambda t, x: 40.0 * x + 1.0, points=((1.0, 0.5),), n=50)
    with pytest.raises(DivergenceError) as exc:
        picard_solve(spec)
    assert len(exc.value.history) > 1


def test_nonconvergence_is_flagged():
    spec = scalar_problem(f=lambda t, x: 0.5 * np.sin(x) + 1.0, max_iter=2)
    out = picard_solve(spec)
    assert not out.converged and out.iterations == 2
    assert out.residual > spec.solver.tol


def test_damping_reaches_same_fixed_point():
    spec = scalar_problem(f=lambda t, x: 0.5 * np.sin(x) + 1.0, n=100)
    a = picard_solve(spec)
    b = picard_solve(spec, SolverConfig(1e-10, 500, 0.5))
    assert a.converged and b.converged
    assert np.max(np.abs(a.u.values - b.u.values)) <= 1e-9


@pytest.mark.parametrize("name", sorted(CURATED))
def test_curated_converge_with_small_boundary_defect(name):
    spec = CURATED[name]()
    out = picard_solve(spec)
    assert out.converged and out.tube_ok
    assert out.residual_history[-1] <= spec.solver.tol
    assert boundary_defect(spec, out.u) <= 10 * spec.solver.tol


@settings(max_examples=20, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(-1.0, 1.0), st.floats(0.05, 0.6), st.sampled_from([0.25, 0.5, 1.0]))
def test_phi_zero_gives_zero_fixed_point(lam, a, c, t1):
    spec = scalar_problem(A=lam, f=lambda t, x: a * np.sin(x), points=((t1, c * math.exp(-abs(lam))),),
                          n=40)
    op = MildOperator(spec)
    assert not np.any(op(Trajectory.zeros(spec.grid, 1)))
