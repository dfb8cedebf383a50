import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delayed_impulses.core import (
    CoverageError,
    DomainError,
    HistoryFunction,
    PiecewiseLinear,
    SystemDefinition,
    embed_history,
    history_eval,
    history_left_limit,
    trajectory_window,
)
from delayed_impulses.integrator import SimConfig, simulate
from delayed_impulses.schedule import ExplicitSchedule


def jump_history():
    # nodes -1, -0.5 (jump 1 -> 3), 0
    return HistoryFunction([-1.0, -0.5, 0.0], [[1.0], [3.0], [3.0]], [[1.0], [1.0], [3.0]])


def test_constant_history_eval():
    h = HistoryFunction.constant([0.5], 1.0)
    for s in (-1.0, -0.7, -0.2, 0.0):
        assert history_eval(h, s)[0] == 0.5


def test_linear_midpoint():
    h = HistoryFunction([-1.0, 0.0], [[0.0], [2.0]])
    assert history_eval(h, -0.5)[0] == pytest.approx(1.0)


def test_jump_right_value_and_left_limit():
    h = jump_history()
    assert history_eval(h, -0.5)[0] == 3.0
    assert history_left_limit(h, -0.5)[0] == 1.0
    # interpolation on either side of the jump
    assert history_eval(h, -0.75)[0] == pytest.approx(1.0)
    assert history_eval(h, -0.25)[0] == pytest.approx(3.0)


def test_left_limit_equals_eval_where_smooth():
    h = HistoryFunction([-1.0, -0.4, 0.0], [[0.0], [1.0], [-2.0]])
    for s in (-0.9, -0.4, -0.1, 0.0):
        np.testing.assert_array_equal(history_left_limit(h, s), history_eval(h, s))


def test_pre_jump_history_at_zero():
    h = HistoryFunction([-1.0, 0.0], [[1.0], [4.0]], [[1.0], [2.0]], pre_jump=True)
    assert history_eval(h, 0.0)[0] == 2.0
    assert history_left_limit(h, 0.0)[0] == 2.0
    assert HistoryFunction([-1.0, 0.0], [[1.0], [4.0]], [[1.0], [2.0]])(0.0)[0] == 4.0


def test_domain_errors():
    h = jump_history()
    with pytest.raises(DomainError):
        history_eval(h, 0.1)
    with pytest.raises(DomainError):
        history_eval(h, -1.5)
    with pytest.raises(DomainError):
        history_left_limit(h, -1.0)


def test_history_validation():
    with pytest.raises(ValueError):
        HistoryFunction([-1.0, -1.0, 0.0], [[1.0], [1.0], [1.0]])
    with pytest.raises(ValueError):
        HistoryFunction([-1.0, -0.5], [[1.0], [1.0]])
    with pytest.raises(ValueError):
        HistoryFunction([-1.0, 0.0], [[np.nan], [1.0]])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=12), st.floats(0.1, 3.0))
def test_nodes_exact(vals, tau):
    grid = np.linspace(-tau, 0.0, len(vals))
    h = HistoryFunction(grid, np.asarray(vals)[:, None])
    for s, v in zip(grid, vals):
        assert history_eval(h, s)[0] == v


def test_integral_splits_jump():
    h = jump_history()
    # 0.5 * 1 + 0.5 * 3
    assert h.integral()[0] == pytest.approx(2.0, abs=1e-15)
    assert h.integral(-0.75, -0.25)[0] == pytest.approx(0.25 * 1 + 0.25 * 3)


def test_piecewise_restrict_endpoints():
    p = PiecewiseLinear([0.0, 1.0, 2.0], [[0.0], [5.0], [2.0]], [[0.0], [1.0], [2.0]])
    ts, vals, lefts = p.restrict(0.5, 1.0)
    np.testing.assert_allclose(ts, [0.5, 1.0])
    assert vals[0, 0] == pytest.approx(0.5) and lefts[-1, 0] == 1.0 and vals[-1, 0] == 5.0


def test_system_definition_probes_zero():
    ok = SystemDefinition(1, 1.0, lambda t, h: -h.current, lambda t, h: 0.5 * h.current)
    assert ok.dimension == 1
    with pytest.raises(ValueError):
        SystemDefinition(1, 1.0, lambda t, h: h.current + 1.0, lambda t, h: 0 * h.current)
    with pytest.raises(ValueError):
        SystemDefinition(1, 0.0, lambda t, h: -h.current, lambda t, h: 0 * h.current)
    with pytest.raises(ValueError):
        SystemDefinition(2, 1.0, lambda t, h: h.current[:1], lambda t, h: 0 * h.current)


def still_system():
    return SystemDefinition(1, 1.0, lambda t, h: 0.0 * h.current, lambda t, h: 1.0 * h.current)


def test_window_of_constant_solution():
    sys = SystemDefinition(1, 1.0, lambda t, h: 0.0 * h.current, lambda t, h: 0.0 * h.current)
    traj = simulate(sys, None, HistoryFunction.constant([0.5], 1.0), 0.0, SimConfig(0.05, 3.0))
    w = trajectory_window(traj, 2.0)
    assert w.tau == pytest.approx(1.0)
    np.testing.assert_allclose(w.values, 0.5)


def test_window_before_impulse():
    traj = simulate(still_system(), ExplicitSchedule([1.0], 5.0), HistoryFunction.constant([1.0], 1.0),
                    0.0, SimConfig(0.05, 2.0))
    assert traj(1.0)[0] == 2.0
    assert trajectory_window(traj, 1.0, before=True)(0.0)[0] == 1.0
    assert trajectory_window(traj, 1.0)(0.0)[0] == 2.0


def test_window_contains_interior_jump():
    # oracle: state is 1 before t = 1 and 2 after, so the window at 1.3
    # carries a jump at offset -0.3 with left limit 1 and value 2
    traj = simulate(still_system(), ExplicitSchedule([1.0], 5.0), HistoryFunction.constant([1.0], 1.0),
                    0.0, SimConfig(0.05, 2.0))
    w = trajectory_window(traj, 1.3)
    assert w(-0.3)[0] == pytest.approx(2.0)
    assert w.left(-0.3)[0] == pytest.approx(1.0)
    assert w(-0.5)[0] == pytest.approx(1.0)
    assert w(-0.1)[0] == pytest.approx(2.0)


def test_window_coverage_error():
    traj = simulate(still_system(), None, HistoryFunction.constant([1.0], 1.0), 0.0, SimConfig(0.05, 2.0))
    with pytest.raises(CoverageError):
        trajectory_window(traj, -0.5)
    with pytest.raises(CoverageError):
        traj(2.5)


def test_window_matches_trajectory_values():
    sys = SystemDefinition(1, 1.0, lambda t, h: -h(-1.0), lambda t, h: -0.5 * h.current)
    traj = simulate(sys, ExplicitSchedule([0.7, 1.9], 5.0), HistoryFunction.constant([1.0], 1.0),
                    0.0, SimConfig(0.01, 3.0))
    for t in (0.3, 0.7, 1.25, 1.9, 3.0):
        assert trajectory_window(traj, t)(0.0)[0] == traj(t)[0]
    for t in (0.7, 1.9):
        assert trajectory_window(traj, t, before=True)(0.0)[0] == traj.left(t)[0]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=10), st.floats(0.2, 2.0), st.floats(-5, 5))
def test_embed_round_trip(vals, tau, t0):
    grid = np.linspace(-tau, 0.0, len(vals))
    phi = HistoryFunction(grid, np.asarray(vals)[:, None])
    traj = embed_history(phi, t0)
    w = trajectory_window(traj, t0)
    for s, v in zip(grid, vals):
        assert w(s)[0] == pytest.approx(v, abs=1e-12)
