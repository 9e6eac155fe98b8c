import math

import numpy as np
import pytest
from scipy.integrate import quad, solve_bvp

from wedflow import oracle
from wedflow.exceptions import OracleError, ParameterError
from wedflow.oracle import ExampleConfig
from wedflow.quadrature import adaptive_simpson

EPS = (0.4, 0.25, 0.1, 0.05)
U0 = (0.0, 0.5, 0.7, 1.0)


def test_exact_J_values():
    opt = (1 - 5 * math.exp(-2)) / 16
    assert oracle.exact_J(0.5) == pytest.approx(opt, rel=1e-15)
    # the commonly quoted decimals 0.0202075 and 0.0404150 are low by 2.2e-7 and 4.5e-7
    assert opt == pytest.approx(0.0202075, abs=3e-7)
    assert oracle.exact_J(0.0) == pytest.approx(0.0404150, abs=5e-7)
    assert oracle.exact_J(1.0) == pytest.approx(0.040415, abs=5e-7)
    for u0 in np.linspace(0, 1, 11):
        assert oracle.exact_J(u0) == pytest.approx(oracle.exact_J(1 - u0), rel=1e-14)
    assert oracle.optimal_value() == pytest.approx(opt, rel=1e-15)


def test_exact_J_matches_quadrature_of_flow():
    for u0 in U0:
        f = lambda t: 0.5 * (oracle.exact_flow(u0, t) - math.exp(-t)) ** 2 \
            + 0.5 * t * t * ((u0 - 1) * math.exp(-t)) ** 2
        assert quad(f, 0, 1, epsabs=1e-14)[0] == pytest.approx(oracle.exact_J(u0), abs=1e-13)


def test_characteristic_roots():
    rm, rp, _, _ = oracle.wed_coefficients(ExampleConfig(0.7, 0.25))
    assert rm == pytest.approx(-0.828427, abs=5e-7)
    assert rp == pytest.approx(4.828427, abs=5e-7)
    for eps in EPS:
        rm, rp, _, _ = oracle.wed_coefficients(ExampleConfig(0.3, eps))
        assert rm * rp == pytest.approx(-1 / eps, rel=1e-12)
        assert rm + rp == pytest.approx(1 / eps, rel=1e-12)


@pytest.mark.parametrize("eps", EPS)
@pytest.mark.parametrize("u0", U0)
def test_minimizer_certificates(eps, u0):
    cfg = ExampleConfig(u0, eps)
    assert oracle.exact_wed_minimizer(cfg, 0.0) == pytest.approx(1.0, abs=1e-12)
    assert abs(oracle.exact_wed_velocity(cfg, 1.0)) <= 1e-10
    t = np.linspace(0, 1, 100)
    h = 1e-4
    y = lambda s: oracle.exact_wed_minimizer(cfg, s)
    for s in t[1:-1]:
        ypp = (y(s + h) - 2 * y(s) + y(s - h)) / h ** 2
        res = -eps * ypp + oracle.exact_wed_velocity(cfg, s) + y(s) - u0 * math.exp(-s)
        assert abs(res) <= 1e-4 * (1 + abs(ypp))


def test_minimizer_against_independent_bvp_solver():
    eps, u0 = 0.25, 0.7

    def rhs(t, z):
        return np.vstack([z[1], (z[1] + z[0] - u0 * np.exp(-t)) / eps])

    def bc(za, zb):
        return np.array([za[0] - 1.0, zb[1]])

    t = np.linspace(0, 1, 201)
    sol = solve_bvp(rhs, bc, t, np.vstack([np.ones_like(t), np.zeros_like(t)]), tol=1e-10,
                    max_nodes=100000)
    assert sol.success
    exact = oracle.exact_wed_minimizer(ExampleConfig(u0, eps), t)
    np.testing.assert_allclose(sol.sol(t)[0], exact, atol=1e-7)


@pytest.mark.parametrize("cfg", [ExampleConfig(0.0, 0.25), ExampleConfig(1.0, 0.25),
                                 ExampleConfig(0.7, 0.1)])
def test_M_eps_two_formulas_agree(cfg):
    M = oracle.exact_M_eps(cfg)
    assert M != 0.0
    assert abs(M - oracle.lemma1_continuum(cfg)) <= 1e-9


def test_M_eps_against_scipy_quad():
    cfg = ExampleConfig(0.7, 0.25)
    f = lambda t: math.exp(-t / 0.25) * (
        0.125 * oracle.exact_wed_velocity(cfg, t) ** 2
        + 0.5 * oracle.exact_wed_minimizer(cfg, t) ** 2
        - 0.7 * math.exp(-t) * oracle.exact_wed_minimizer(cfg, t))
    assert oracle.exact_M_eps(cfg) == pytest.approx(quad(f, 0, 1, epsabs=1e-13)[0], abs=1e-10)


def test_M_eps_minimal_against_flow_competitor():
    for u0 in U0:
        cfg = ExampleConfig(u0, 0.25)
        y = lambda t: oracle.exact_flow(u0, t)
        v = lambda t: (u0 - 1 - t * u0) * math.exp(-t)
        W = quad(lambda t: math.exp(-4 * t) * (0.125 * v(t) ** 2 + 0.5 * y(t) ** 2
                                               - u0 * math.exp(-t) * y(t)), 0, 1)[0]
        assert oracle.exact_M_eps(cfg) <= W


def test_M_eps_quadrature_self_consistency():
    cfg = ExampleConfig(0.5, 0.05)
    a = oracle.exact_M_eps(cfg, tol=1e-10)
    b = oracle.exact_M_eps(cfg, tol=5e-11)
    assert abs(a - b) <= 1e-10


def test_j_eps_uniform_convergence_and_minimizers():
    lattice = np.linspace(0, 1, 1001)
    gaps, argmins = [], []
    for eps in EPS:
        j = oracle.j_eps_curve(eps, lattice)
        assert np.all(j >= 0)
        gaps.append(np.max(np.abs(j - oracle.exact_J(lattice))))
        argmins.append(lattice[np.argmin(j)])
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    dist = [abs(a - 0.5) for a in argmins]
    assert all(b < a for a, b in zip(dist, dist[1:]))


def test_j_eps_curve_matches_direct_quadrature():
    for u0 in (0.13, 0.77):
        direct = oracle.exact_j_eps(ExampleConfig(u0, 0.2))
        assert oracle.j_eps_curve(0.2, [u0])[0] == pytest.approx(direct, abs=1e-9)


def test_printed_displays():
    for eps in EPS:
        for u0 in U0:
            cfg = ExampleConfig(u0, eps)
            _, _, cm, _ = oracle.wed_coefficients(cfg)
            assert oracle.printed_c_minus(cfg) == pytest.approx(cm, rel=1e-10, abs=1e-12)
            assert oracle.printed_j_eps(cfg) == pytest.approx(oracle.exact_j_eps(cfg), abs=1e-9)
            # one denominator of the printed minimum display is eps*(r- + r+) - 1 = 0
            assert math.isnan(oracle.printed_M_eps(cfg, "+"))


def test_verify_oracle_table():
    rows = oracle.verify_oracle()
    assert rows and all(r["passed"] is not False for r in rows)
    assert any(r["passed"] is None for r in rows)
    assert {"check", "epsilon", "u0", "value", "passed"} == set(rows[0])


def test_config_validation():
    with pytest.raises(ParameterError):
        ExampleConfig(1.5, 0.2)
    with pytest.raises(ParameterError):
        ExampleConfig(0.5, 0.0)


def test_adaptive_simpson():
    val, err = adaptive_simpson(math.exp, 0.0, 1.0)
    assert val == pytest.approx(math.e - 1, abs=1e-10)
    assert err <= 1e-10
    val, _ = adaptive_simpson(lambda t: math.exp(-t / 0.01), 0.0, 1.0)
    assert val == pytest.approx(0.01 * (1 - math.exp(-100)), abs=1e-10)
    with pytest.raises(OracleError):
        adaptive_simpson(lambda t: 1 / math.sqrt(abs(t - 0.3)) if t != 0.3 else 1e300,
                         0.0, 1.0, max_depth=8)
