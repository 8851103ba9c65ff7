import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonlocal_evolution.evolution import CoefficientFamily, build_evolution
from nonlocal_evolution.grid import OffGridError, TimeGrid, Trajectory
from nonlocal_evolution.nonlocal_map import (
    H2ViolationError,
    NonlocalKind,
    NonlocalMap,
    apply_F,
    block_norms,
    build_resolvent,
    support,
    truncate,
    truncate_blocks,
)
from nonlocal_evolution.numerics import op_norm

GRID = TimeGrid(1.0, 20)


def tab_for(A, d=1, n=20):
    return build_evolution(CoefficientFamily.constant(np.asarray(A, float).reshape(d, d), 1.0), TimeGrid(1.0, n))


def test_map_validation():
    with pytest.raises(ValueError):
        NonlocalMap.multipoint([], 1)
    with pytest.raises(ValueError):
        NonlocalMap.multipoint([(0.5, 1.0), (0.25, 1.0)], 1)
    with pytest.raises(ValueError):
        NonlocalMap.multipoint([(0.0, 1.0)], 1)
    with pytest.raises(ValueError):
        NonlocalMap.multipoint([(0.5, 0.0)], 1)
    with pytest.raises(ValueError):
        NonlocalMap.multipoint([(0.5, 1.0)], 2, partition=(1, 2))
    F = NonlocalMap.multipoint([(0.5, 0.3)], 2)
    assert np.array_equal(F.coeffs[0], 0.3 * np.eye(2))
    assert F.coefficient_norm_sum("ell2") == pytest.approx(0.3)


def test_support_and_per_component_supports():
    assert support(NonlocalMap.zero(2, (1, 1))) == (0.0, (0.0, 0.0))
    F = NonlocalMap.multipoint(
        [(0.25, [[0.3, 0.0], [0.2, 0.0]]), (0.75, [[0.0, 0.1], [0.0, 0.4]])], 2, (1, 1)
    )
    assert support(F) == (0.75, (0.25, 0.75))
    Fq = NonlocalMap.quadrature([0.0, 0.5, 0.9], [0.1, 0.0, 0.2], 1)
    assert support(Fq)[0] == 0.9
    assert Fq.kind is NonlocalKind.QUADRATURE


def test_apply_and_truncate():
    u = Trajectory.from_function(GRID, lambda t: [t, 2 * t])
    F = NonlocalMap.multipoint([(0.5, [[1.0, 0.0], [0.0, 2.0]]), (1.0, 1.0)], 2)
    assert np.allclose(apply_F(F, u), [0.5 + 1.0, 2.0 + 2.0])
    v = truncate(u, 0.5)
    assert np.allclose(v.values[-1], [0.5, 1.0])
    w = truncate_blocks(u, (0.25, 0.5), [slice(0, 1), slice(1, 2)])
    assert np.allclose(w.values[-1], [0.25, 1.0])
    # F only reads the trajectory up to its support
    assert np.allclose(apply_F(F, truncate(u, 1.0)), apply_F(F, u))


def test_zero_map_resolvent_is_identity():
    res = build_resolvent(NonlocalMap.zero(2), tab_for(np.zeros((2, 2)), 2))
    assert np.array_equal(res.B, np.eye(2))
    assert res.BF_norm_upper == 0.0


def test_scalar_resolvent_closed_form():
    # A = 0: B = 1/(1 - 0.5) = 2
    res = build_resolvent(NonlocalMap.multipoint([(1.0, 0.5)], 1), tab_for(0.0))
    assert res.B[0, 0] == 2.0
    assert res.BF_norm_upper == 1.0
    assert res.contraction_margin == 0.5
    # A = -1: B = 1/(1 - 0.5 e^{-1}) up to RK4 error
    res = build_resolvent(NonlocalMap.multipoint([(1.0, 0.5)], 1), tab_for(-1.0, n=200))
    assert res.B[0, 0] == pytest.approx(1 / (1 - 0.5 * math.exp(-1)), abs=1e-9)


def test_h2_violation():
    with pytest.raises(H2ViolationError):
        build_resolvent(NonlocalMap.multipoint([(1.0, 1.0)], 1), tab_for(0.0))


def test_off_grid_condition_time():
    F = NonlocalMap.multipoint([(0.333, 0.5)], 1)
    with pytest.raises(OffGridError):
        build_resolvent(F, tab_for(0.0))


def test_block_norms_sparsity():
    F = NonlocalMap.multipoint([(0.5, [[0.0, 0.3], [0.0, 0.0]])], 2, (1, 1))
    res = build_resolvent(F, tab_for(np.diag([-1.0, -1.0]), 2))
    G = block_norms(F, res.B, "ell2")
    assert G[0, 0] == 0.0 and G[1, 0] == 0.0 and G[1, 1] == 0.0
    assert G[0, 1] == pytest.approx(0.3)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 100_000))
def test_resolvent_identity_random(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    tab = tab_for(rng.standard_normal((d, d)), d)
    m = int(rng.integers(1, 4))
    times = np.sort(rng.choice(np.arange(1, 21), m, replace=False)) / 20
    raw = [rng.standard_normal((d, d)) for _ in range(m)]
    total = sum(op_norm(C) for C in raw)
    scale = 0.9 / (tab.M * total)
    F = NonlocalMap.multipoint([(t, C * scale) for t, C in zip(times, raw)], d)
    res = build_resolvent(F, tab)
    assert tab.M * F.coefficient_norm_sum("ell2") <= 0.9 + 1e-12
    assert op_norm(res.B @ (np.eye(d) - res.F_of_T0) - np.eye(d)) <= 1e-10


def test_two_point_apply_and_resolvent_example():
    u = Trajectory.from_function(TimeGrid(1.0, 20), lambda t: [t])
    F = NonlocalMap.multipoint([(0.25, 0.3), (0.75, 0.2)], 1)
    assert apply_F(F, u)[0] == pytest.approx(0.225, abs=1e-15)
    res = build_resolvent(NonlocalMap.multipoint([(1.0, 0.5)], 1), tab_for(-1.0, n=200))
    assert res.F_of_T0[0, 0] == pytest.approx(0.18394, abs=1e-5)
    # 1 / (1 - 0.5 e^{-1}) = 1.225400...; a quoted 1.22542 is a rounding slip
    assert res.B[0, 0] == pytest.approx(1.22540, abs=1e-5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_support_consistency(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 4))
    times = np.sort(rng.choice(np.arange(1, 21), m, replace=False)) / 20
    F = NonlocalMap.multipoint([(t, rng.standard_normal((2, 2))) for t in times], 2)
    a_F = support(F)[0]
    u = Trajectory(GRID, rng.standard_normal((21, 2)))
    noise = rng.standard_normal((21, 2)) * (np.arange(21) > GRID.index_of(a_F))[:, None]
    v = Trajectory(GRID, u.values + noise)
    assert np.array_equal(apply_F(F, u), apply_F(F, v))
    assert np.array_equal(apply_F(F, u), apply_F(F, truncate(u, a_F)))


@settings(max_examples=40, deadline=None)
@given(st.floats(-2.0, 1.0), st.floats(0.01, 0.9), st.integers(1, 20))
def test_contraction_margin_bounds_B(lam, c, k):
    tab = tab_for(lam)
    c = c / tab.M
    res = build_resolvent(NonlocalMap.multipoint([(k / 20, c)], 1), tab)
    assert res.contraction_margin == pytest.approx(1 - tab.M * c, rel=1e-12)
    assert op_norm(res.B) <= 1 / res.contraction_margin + 1e-8
    bigger = build_resolvent(NonlocalMap.multipoint([(k / 20, c * 1.05)], 1), tab)
    assert bigger.contraction_margin <= res.contraction_margin
