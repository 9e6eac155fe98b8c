import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wedflow import (ControlFamily, DoubleWell, ProblemBundle, SolverOptions, TargetFunctional,
                     TimeGrid, decay_example, solve_P_eps)
from wedflow.exceptions import ParameterError
from wedflow.sweep import (EPS_COLUMNS, LAMBDA_FLOOR, SweepPlan, cauchy_rate_fit,
                           default_schedule, gamma_liminf_probe, monotone_trend,
                           strictly_decreasing, summarize, sweep_eps, sweep_fixed_control,
                           sweep_joint, sweep_lambda, write_table_csv)


@pytest.fixture(scope="module")
def small():
    return decay_example(200)


def test_plan_validation(small):
    for kw in ({"epsilons": []}, {"epsilons": [0.2, 0.4]}, {"epsilons": [0.2, 0.2]},
               {"lambdas": [1e-2, -1.0]}, {"sigma": 1.0}, {"sigma": 0.0}):
        with pytest.raises(ParameterError):
            SweepPlan(small, **kw)
    plan = SweepPlan(small, epsilons=[1, 0.5])
    assert plan.epsilons == [1.0, 0.5]


def test_default_schedule_decay(small):
    plan = SweepPlan(small, epsilons=[0.4, 0.2, 0.1, 0.05])
    q, ok = plan.check_schedule()
    assert ok
    np.testing.assert_allclose(q, plan.epsilons, rtol=1e-12)
    assert default_schedule(0.1, 1.0) == pytest.approx(1e-4 * math.exp(-10))
    _, bad = SweepPlan(small, epsilons=[0.4, 0.2], schedule=lambda e, T: 1e-3).check_schedule()
    assert not bad


def test_monotone_trend():
    assert monotone_trend([1.0, 0.5, 0.52, 0.1])
    assert not monotone_trend([1.0, 0.5, 0.6, 0.1])
    assert not monotone_trend([1.0, 1.05])
    assert not monotone_trend([1.0, float("nan")])
    assert monotone_trend([3.0])


@given(st.lists(st.floats(1e-6, 1e6), min_size=2, max_size=8))
def test_sorted_sequences_are_monotone(values):
    v = sorted(values, reverse=True)
    assert monotone_trend(v)
    if len(set(v)) == len(v):
        assert strictly_decreasing(v)


def test_cauchy_rate_fit():
    eps = [0.4, 0.2, 0.1, 0.05]
    d = [math.sqrt(a + b) * 0.07 for a, b in zip(eps, eps[1:])]
    C, ratios, ok = cauchy_rate_fit(eps, d)
    assert C == pytest.approx(0.07) and ok
    d[-1] *= 1.2
    assert not cauchy_rate_fit(eps, d)[2]


def test_single_level_matches_direct_solve(small):
    plan = SweepPlan(small, epsilons=[0.25])
    row = sweep_eps(plan)[0]
    pair = solve_P_eps(small.target, small.wed(0.25), small.family)
    assert row["status"] == "ok"
    assert row["u_star"] == pair.u.params[0]
    assert row["value"] == pair.value
    assert set(row) == set(EPS_COLUMNS)


def test_lambda_floor_rows_skipped(small):
    plan = SweepPlan(small, epsilons=[0.4, 0.02])
    rows = sweep_joint(plan)
    assert plan.schedule_values()[1] < LAMBDA_FLOOR
    assert rows[0]["status"] == "ok"
    assert rows[1]["status"] == "skipped: lambda below floor"
    assert math.isnan(rows[1]["value"])


def test_failed_rows_are_recorded():
    g = TimeGrid(1.0, 100)
    fam = ControlFamily.basis_box(["3*sin(9*t)"], [0.5], [1.0])
    b = ProblemBundle(DoubleWell(), [0.3], g, fam, TargetFunctional(d=1, w_y=1.0))
    plan = SweepPlan(b, epsilons=[0.2, 0.1], options=SolverOptions(max_iter=1))
    rows = sweep_fixed_control(plan, fam.point([1.0]))
    assert all(r["status"].startswith("failed") for r in rows)
    assert not summarize("fixed-control", rows)["passed"]


def test_threaded_rows_keep_plan_order(small):
    seq = sweep_eps(SweepPlan(small, epsilons=[0.4, 0.2, 0.1]))
    par = sweep_eps(SweepPlan(decay_example(200), epsilons=[0.4, 0.2, 0.1], threads=3))
    assert seq == par


def test_constant_schedule_reproduces_lambda_sweep(small):
    lam = 1e-2
    joint = sweep_joint(SweepPlan(small, epsilons=[0.2], schedule=lambda e, T: lam))[0]
    row = sweep_lambda(SweepPlan(small, lambdas=[lam]), 0.2)[0]
    assert joint["u_star"] == row["u_star"]
    assert joint["value"] == row["value"]
    assert joint["h1_dist_sq"] == pytest.approx(row["h1_dist"] ** 2, rel=1e-14)


def test_lambda_sweep_summary(small):
    rows = sweep_lambda(SweepPlan(small), 0.2)
    s = summarize("sweep-lambda", rows)
    assert s["passed"], s
    assert s["ok_rows"] == 4


def test_gamma_probe_requires_u_hat(small):
    with pytest.raises(ParameterError):
        gamma_liminf_probe(SweepPlan(small))
    rows = gamma_liminf_probe(SweepPlan(small, u_hat=[0.5]), epsilons=[0.2, 0.1])
    assert rows[1]["gap"] < rows[0]["gap"]
    assert rows[0]["P_value"] == rows[1]["P_value"]


def test_csv_writer(tmp_path, small):
    rows = sweep_eps(SweepPlan(small, epsilons=[0.3]))
    path = tmp_path / "t.csv"
    write_table_csv(rows, EPS_COLUMNS, path)
    with open(path) as fh:
        got = list(csv.DictReader(fh))
    assert float(got[0]["value"]) == rows[0]["value"]
    assert got[0]["status"] == "ok"
