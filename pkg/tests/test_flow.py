import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wedflow import (DoubleWell, FlowProblem, Obstacle, Quadratic, TimeGrid, Trajectory,
                     decay_example, dissipation_identity_residual, solve_gradient_flow)
from wedflow.exceptions import DomainError, InputError, ParameterError
from wedflow.oracle import exact_flow


def _zero(grid, d=1):
    return Trajectory.constant(grid, np.zeros(d))


def test_uncontrolled_decay_is_explicit_recursion():
    g = TimeGrid(1.0, 50)
    y, rep = solve_gradient_flow(FlowProblem(Quadratic([[1.0]]), [1.0], g), _zero(g))
    np.testing.assert_allclose(y.values[:, 0], (1 + g.h) ** -np.arange(51.0), rtol=1e-13)
    assert rep.converged and rep.iterations == 50


def test_example_flow_first_order():
    errs = []
    for N in (100, 200, 400, 800):
        b = decay_example(N)
        y, _ = solve_gradient_flow(b.flow(), b.family.point([0.5]))
        errs.append(np.max(np.abs(y.values[:, 0] - exact_flow(0.5, b.grid.nodes))))
    assert all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))
    h = [1 / 100, 1 / 200, 1 / 400, 1 / 800]
    C = errs[0] / h[0]
    assert all(e <= 1.1 * C * hk for e, hk in zip(errs, h))


def test_obstacle_flow_sticks_to_lower_bound():
    g = TimeGrid(1.0, 20)
    y, _ = solve_gradient_flow(FlowProblem(Obstacle(1.0, 2.0), [1.0], g), _zero(g))
    np.testing.assert_array_equal(y.values, 1.0)


def test_dissipation_zero_case():
    g = TimeGrid(1.0, 10)
    p = FlowProblem(Quadratic([[1.0]]), [0.0], g)
    y, _ = solve_gradient_flow(p, _zero(g))
    assert dissipation_identity_residual(p, _zero(g), y) == 0.0


def test_dissipation_defect_example():
    defects = []
    for N in (500, 1000, 2000):
        b = decay_example(N)
        u = b.family.point([0.5])
        y, rep = solve_gradient_flow(b.flow(), u)
        defects.append(dissipation_identity_residual(b.flow(), u, y))
        assert set(rep.extra["dissipation"]) >= {"kinetic", "subgradient", "forcing"}
    assert defects[1] <= 1e-2
    for a, b_ in zip(defects, defects[1:]):
        assert 1.6 <= a / b_ <= 2.4


def test_dissipation_defect_double_well_halves():
    defects = []
    for N in (100, 200, 400):
        g = TimeGrid(1.0, N)
        p = FlowProblem(DoubleWell(), [0.3], g)
        u = Trajectory.from_function(g, lambda t: np.sin(3 * t) + 0.5)
        y, _ = solve_gradient_flow(p, u)
        defects.append(dissipation_identity_residual(p, u, y))
    for a, b_ in zip(defects, defects[1:]):
        assert abs(a / b_ - 2) <= 0.4


@pytest.mark.parametrize("energy", [Quadratic([[1.0, 0.2], [0.2, 0.5]]), Obstacle(-1.0, 1.0)],
                         ids=["quadratic", "obstacle"])
@given(a=st.lists(st.floats(-1, 1), min_size=2, max_size=2),
       b=st.lists(st.floats(-1, 1), min_size=2, max_size=2))
def test_contraction_for_nonnegative_kappa(energy, a, b):
    g = TimeGrid(1.0, 30)
    u = Trajectory.from_function(g, lambda t: np.stack([np.cos(4 * t), t], axis=-1))
    ya, _ = solve_gradient_flow(FlowProblem(energy, a, g), u)
    yb, _ = solve_gradient_flow(FlowProblem(energy, b, g), u)
    dist = np.linalg.norm(ya.values - yb.values, axis=1)
    assert np.all(np.diff(dist) <= 1e-14)


def test_initial_value_pinned_bitwise():
    g = TimeGrid(1.0, 10)
    y0 = [0.1 + 0.2]
    y, _ = solve_gradient_flow(FlowProblem(DoubleWell(), y0, g), _zero(g))
    assert y.values[0, 0] == y0[0]


@pytest.mark.parametrize("energy,y0", [(Quadratic([[1.0]]), [1.0]), (DoubleWell(), [0.2])])
def test_mesh_convergence_factor(energy, y0):
    def solve(N):
        g = TimeGrid(1.0, N)
        u = Trajectory.from_function(g, lambda t: np.cos(2 * t))
        return solve_gradient_flow(FlowProblem(energy, y0, g), u)[0].values[:, 0]

    y1, y2, y4 = solve(100), solve(200), solve(400)
    d1 = np.max(np.abs(y2[::2] - y1))
    d2 = np.max(np.abs(y4[::2] - y2))
    assert d1 / d2 >= 1.8


def test_step_guard_and_domain():
    with pytest.raises(ParameterError):
        FlowProblem(DoubleWell(), [0.0], TimeGrid(3.0, 2))
    with pytest.raises(DomainError):
        FlowProblem(Obstacle(0.0, 1.0), [2.0], TimeGrid(1.0, 10))
    g = TimeGrid(1.0, 10)
    p = FlowProblem(Quadratic([[1.0]]), [1.0], g)
    with pytest.raises(InputError):
        solve_gradient_flow(p, _zero(TimeGrid(1.0, 11)))
    with pytest.raises(InputError):
        solve_gradient_flow(p, _zero(g, d=2))


def test_exact_flow_values():
    assert exact_flow(0.5, 0.0) == 1.0
    assert exact_flow(0.5, 1.0) == pytest.approx(1.5 * math.exp(-1), rel=1e-15)
    t = np.linspace(0, 1, 7)
    np.testing.assert_allclose(exact_flow(0.0, t), np.exp(-t))
