import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from wedflow import DoubleWell, Obstacle, Quadratic, energy_from_config
from wedflow.energy import minimal_section, phi_grad, phi_hess, phi_value, prox_phi
from wedflow.exceptions import CapabilityError, ConfigError, DomainError, ParameterError

SMOOTH = [Quadratic([[2.0, 0.5], [0.5, 1.0]]), Quadratic([[1.0]]), DoubleWell()]
ALL = SMOOTH + [Obstacle(0.0, 1.0)]

finite = st.floats(-3, 3, allow_nan=False)


def test_values():
    assert phi_value(Quadratic(np.eye(2)), [1.0, 0.0]) == 0.5
    assert phi_value(DoubleWell(), [1.0]) == 0.0
    assert phi_value(Obstacle(0, 1), [2.0]) == np.inf
    assert phi_value(Obstacle(0, 1), [0.5]) == 0.125


def test_quadratic_modulus_and_validation():
    assert Quadratic([[2.0, 0.0], [0.0, 3.0]]).kappa == pytest.approx(2.0)
    with pytest.raises(ParameterError):
        Quadratic([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ParameterError):
        Quadratic([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(ParameterError):
        Obstacle(1.0, 0.0)


def test_quadratic_prox_explicit():
    z = np.array([0.7, -1.2])
    np.testing.assert_allclose(prox_phi(Quadratic(np.eye(2)), z, 0.3), z / 1.3, rtol=1e-15)


def test_obstacle_prox_against_brute_force_grid():
    grid = np.linspace(0.0, 1.0, 1_000_001)
    E = Obstacle(0.0, 1.0)
    for z in (-0.4, 0.2, 0.77, 1.3, 2.5):
        for gamma in (0.05, 1.0, 4.0):
            obj = 0.5 * (grid - z) ** 2 + gamma * 0.5 * grid ** 2
            brute = grid[np.argmin(obj)]
            w = prox_phi(E, [z], gamma)[0]
            assert abs(w - brute) <= 1e-6
            assert w == pytest.approx(np.clip(z / (1 + gamma), 0, 1), abs=1e-15)


def test_double_well_prox_against_golden_section():
    res = minimize_scalar(lambda w: 0.5 * (w - 0.9) ** 2 + 0.01 * 0.25 * (w * w - 1) ** 2,
                          bracket=(0.0, 0.9, 2.0), method="golden", tol=1e-12)
    assert abs(prox_phi(DoubleWell(), [0.9], 0.01)[0] - res.x) <= 1e-8


def test_prox_guard():
    with pytest.raises(ParameterError):
        prox_phi(DoubleWell(), [0.1], 1.0)
    with pytest.raises(ParameterError):
        prox_phi(Quadratic([[1.0]]), [0.1], -1.0)
    # just inside the guard is fine
    prox_phi(DoubleWell(), [0.1], 0.99)


def test_derivatives():
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    v = np.array([0.3, -0.4])
    np.testing.assert_allclose(phi_grad(Quadratic(Q), v), Q @ v)
    np.testing.assert_allclose(phi_hess(Quadratic(Q), v), Q)
    dw = DoubleWell()
    assert phi_grad(dw, [0.0])[0] == 0.0
    assert phi_hess(dw, [0.0])[0, 0] == -1.0
    assert phi_grad(dw, [2.0])[0] == 6.0
    assert phi_hess(dw, [2.0])[0, 0] == 11.0
    fd = (phi_value(dw, [2.0 + 1e-6]) - phi_value(dw, [2.0 - 1e-6])) / 2e-6
    assert fd == pytest.approx(6.0, rel=1e-8)
    with pytest.raises(CapabilityError):
        phi_grad(Obstacle(), [0.5])
    with pytest.raises(CapabilityError):
        phi_hess(Obstacle(), [0.5])


def test_minimal_section():
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    np.testing.assert_allclose(minimal_section(Quadratic(Q), [1.0, 2.0]), Q @ [1.0, 2.0])
    E = Obstacle(0.0, 1.0)
    assert minimal_section(E, [0.4])[0] == 0.4
    assert minimal_section(E, [1.0])[0] == 1.0
    assert minimal_section(E, [0.0])[0] == 0.0
    assert minimal_section(Obstacle(-2.0, -1.0), [-1.0])[0] == 0.0
    assert minimal_section(Obstacle(-2.0, -1.0), [-2.0])[0] == -2.0
    with pytest.raises(DomainError):
        minimal_section(E, [1.5])


@pytest.mark.parametrize("E", SMOOTH, ids=repr)
@given(z=st.lists(finite, min_size=2, max_size=2), gamma=st.floats(1e-3, 0.9))
def test_prox_characterization(E, z, gamma):
    z = np.array(z[:E.d] if hasattr(E, "Q") else z[:1])
    w = prox_phi(E, z, gamma)
    np.testing.assert_allclose(w + gamma * phi_grad(E, w), z, atol=1e-10)


@pytest.mark.parametrize("E", [Quadratic([[2.0, 0.5], [0.5, 1.0]]), Obstacle(-0.5, 0.5)], ids=repr)
@given(a=st.lists(finite, min_size=2, max_size=2), b=st.lists(finite, min_size=2, max_size=2),
       gamma=st.floats(1e-3, 10))
def test_prox_nonexpansive(E, a, b, gamma):
    a, b = np.array(a), np.array(b)
    pa, pb = prox_phi(E, a, gamma), prox_phi(E, b, gamma)
    assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) * (1 + 1e-12) + 1e-15


@pytest.mark.parametrize("E", ALL, ids=repr)
@given(w=st.lists(finite, min_size=2, max_size=2), v=st.lists(finite, min_size=2, max_size=2),
       r=st.floats(0, 1))
def test_kappa_convexity(E, w, v, r):
    d = E.Q.shape[0] if hasattr(E, "Q") else 2
    w, v = np.array(w[:d]), np.array(v[:d])
    if isinstance(E, Obstacle):
        w, v = np.clip(w, E.a, E.b), np.clip(v, E.a, E.b)
    lhs = phi_value(E, r * w + (1 - r) * v)
    rhs = (r * phi_value(E, w) + (1 - r) * phi_value(E, v)
           - 0.5 * E.kappa * r * (1 - r) * np.sum((w - v) ** 2))
    assert lhs <= rhs + 1e-12 * (1 + abs(rhs))


@pytest.mark.parametrize("E", SMOOTH, ids=repr)
@given(v=st.lists(finite, min_size=2, max_size=2))
def test_gradient_matches_central_differences(E, v):
    d = E.Q.shape[0] if hasattr(E, "Q") else 1
    v = np.array(v[:d])
    g = phi_grad(E, v)
    step = 1e-5
    fd = np.array([(phi_value(E, v + step * e) - phi_value(E, v - step * e)) / (2 * step)
                   for e in np.eye(d)])
    assert np.linalg.norm(fd - g) <= 1e-6 * max(1.0, np.linalg.norm(g))


def test_batched_prox_matches_single():
    dw = DoubleWell()
    Z = np.linspace(-3, 3, 41)[:, None]
    batched = dw.prox_nodes(Z, 0.5)
    single = np.array([prox_phi(dw, z, 0.5) for z in Z])
    np.testing.assert_allclose(batched, single, rtol=0, atol=1e-14)


def test_energy_from_config():
    assert isinstance(energy_from_config({"type": "double_well"}), DoubleWell)
    ob = energy_from_config({"type": "obstacle", "a": -1, "b": 2})
    assert (ob.a, ob.b) == (-1.0, 2.0)
    q = energy_from_config({"type": "quadratic", "Q": [[3.0]]})
    assert q.kappa == pytest.approx(3.0)
    for bad in ({"type": "quartic"}, {"Q": [[1.0]]}, {"type": "quadratic"},
                {"type": "double_well", "k": 1}, {"type": "obstacle", "c": 1}):
        with pytest.raises(ConfigError):
            energy_from_config(bad)
