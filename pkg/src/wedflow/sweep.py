"""Convergence experiments over eps and lambda.

Every sweep returns a list of row dicts with a fixed column order (see the
``*_COLUMNS`` constants) and can be written to CSV with
:func:`write_table_csv`. Rows are computed concurrently when ``threads > 1``
and always assembled in plan order.
"""

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import norm_c0, norm_h1, norm_hsigma, velocity_l2
from .exceptions import ParameterError, WedflowError
from .flow import solve_gradient_flow
from .optctl import SolverOptions, eval_J, solve_P, solve_P_eps, solve_P_eps_lambda
from .wed import regularity_terms, wed_minimize

log = logging.getLogger(__name__)

LAMBDA_FLOOR = 1e-14
WIGGLE = 0.10

EPS_COLUMNS = ["epsilon", "u_star", "value", "c0_dist", "hsigma_dist", "h1_proxy", "status"]
LAMBDA_COLUMNS = ["lambda", "u_star", "value", "J_part", "penalty_residual", "h1_dist",
                  "status"]
JOINT_COLUMNS = ["epsilon", "lambda", "u_star", "value", "c0_dist", "hsigma_dist",
                 "h1_dist_sq", "coercivity_bound", "bound_ok", "status"]
FIXED_COLUMNS = ["epsilon", "c0_dist", "hsigma_dist", "h1_proxy", "cauchy_c0",
                 "regularity", "status"]
GAMMA_COLUMNS = ["epsilon", "P_eps_value", "P_value", "gap", "status"]


def default_schedule(eps, T):
    """``lambda_eps = eps^4 exp(-T/eps)``."""
    return eps ** 4 * math.exp(-T / eps)


@dataclass
class SweepPlan:
    """Problem bundle plus the parameter lists of a sweep.

    ``schedule(eps, T)`` gives the joint-sweep lambda; the plan checks that
    ``lambda_eps * eps^-3 * exp(T/eps)`` decreases along ``epsilons``.
    """

    bundle: object
    epsilons: list = field(default_factory=lambda: [0.4, 0.2, 0.1, 0.05])
    lambdas: list = field(default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4])
    schedule: object = default_schedule
    sigma: float = 0.5
    u_hat: list = None
    options: SolverOptions = field(default_factory=SolverOptions)
    threads: int = 1

    def __post_init__(self):
        for name in ("epsilons", "lambdas"):
            seq = [float(x) for x in getattr(self, name)]
            if not seq:
                raise ParameterError(f"{name} must not be empty")
            if any(x <= 0 for x in seq):
                raise ParameterError(f"{name} must be positive")
            if any(b >= a for a, b in zip(seq, seq[1:])):
                raise ParameterError(f"{name} must be strictly decreasing")
            setattr(self, name, seq)
        if not 0 < self.sigma < 1:
            raise ParameterError("sigma must lie in (0, 1)")

    def schedule_values(self):
        T = self.bundle.grid.T
        return [float(self.schedule(e, T)) for e in self.epsilons]

    def check_schedule(self):
        """Return the sequence ``lambda eps^-3 e^{T/eps}`` and whether it decays."""
        T = self.bundle.grid.T
        lams = self.schedule_values()
        q = [lam * e ** -3 * math.exp(T / e) for lam, e in zip(lams, self.epsilons)]
        ok = all(b <= a for a, b in zip(q, q[1:])) and (len(q) == 1 or q[-1] < q[0])
        return q, ok


def _map_rows(fn, items, threads):
    if threads and threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _guard(fn, columns, key, value):
    try:
        return fn()
    except WedflowError as exc:
        log.warning("sweep row %s=%g failed: %s", key, value, exc)
        row = {c: float("nan") for c in columns}
        row[key] = value
        row["status"] = f"failed: {exc}"
        return row


def _inner(plan):
    return {"tol": plan.options.tol, "max_iter": plan.options.max_iter}


def _flow_of(bundle, u):
    y, _ = solve_gradient_flow(bundle.flow(), u)
    return y


def sweep_eps(plan):
    """Solve the bilevel problem for each eps and compare with the flow.

    Distances are between the WED state at the optimal control and the
    gradient flow driven by the same control: C0, H^sigma, and the L2 norm
    of the velocity difference (a strong surrogate for weak H1).
    """
    b = plan.bundle

    def row(eps):
        def run():
            pair = solve_P_eps(b.target, b.wed(eps), b.family, plan.options)
            diff = pair.y - _flow_of(b, pair.u)
            return {"epsilon": eps, "u_star": _params(pair.u), "value": pair.value,
                    "c0_dist": norm_c0(diff), "hsigma_dist": norm_hsigma(diff, plan.sigma),
                    "h1_proxy": velocity_l2(diff), "status": "ok"}
        return _guard(run, EPS_COLUMNS, "epsilon", eps)

    return _map_rows(row, plan.epsilons, plan.threads)


def sweep_lambda(plan, eps_fixed):
    """Penalized problem at fixed eps over the lambda list."""
    b = plan.bundle
    wed = b.wed(eps_fixed)

    def row(lam):
        def run():
            pair = solve_P_eps_lambda(b.target, wed, b.family, lam, plan.options)
            ystar, _ = wed_minimize(wed, pair.u, **_inner(plan))
            return {"lambda": lam, "u_star": _params(pair.u), "value": pair.value,
                    "J_part": pair.J_part, "penalty_residual": lam * pair.penalty_part,
                    "h1_dist": norm_h1(pair.y - ystar), "status": "ok"}
        return _guard(run, LAMBDA_COLUMNS, "lambda", lam)

    return _map_rows(row, plan.lambdas, plan.threads)


def sweep_joint(plan):
    """Penalized problem along ``lambda = schedule(eps)`` as eps decreases.

    Rows whose lambda falls below ``LAMBDA_FLOOR`` are skipped and flagged.
    """
    b = plan.bundle
    T = b.grid.T

    def row(item):
        eps, lam = item
        if lam < LAMBDA_FLOOR:
            log.warning("lambda=%g below floor %g at eps=%g: row skipped", lam, LAMBDA_FLOOR, eps)
            r = {c: float("nan") for c in JOINT_COLUMNS}
            r.update(epsilon=eps, **{"lambda": lam}, status="skipped: lambda below floor")
            return r

        def run():
            wed = b.wed(eps)
            pair = solve_P_eps_lambda(b.target, wed, b.family, lam, plan.options)
            ystar, _ = wed_minimize(wed, pair.u, **_inner(plan))
            diff = pair.y - _flow_of(b, pair.u)
            h1sq = norm_h1(pair.y - ystar) ** 2
            bound = lam * eps ** -3 * math.exp(T / eps) * pair.value
            return {"epsilon": eps, "lambda": lam, "u_star": _params(pair.u),
                    "value": pair.value, "c0_dist": norm_c0(diff),
                    "hsigma_dist": norm_hsigma(diff, plan.sigma), "h1_dist_sq": h1sq,
                    "coercivity_bound": bound, "bound_ok": bool(h1sq <= bound), "status": "ok"}
        return _guard(run, JOINT_COLUMNS, "epsilon", eps)

    return _map_rows(row, list(zip(plan.epsilons, plan.schedule_values())), plan.threads)


def sweep_fixed_control(plan, u):
    """WED minimizers for one fixed control as eps decreases.

    Records distances to the gradient flow, the C0 distance to the previous
    eps level, and the total of the eps-uniform regularity terms.
    """
    b = plan.bundle
    flow_y = _flow_of(b, u)

    def row(eps):
        def run():
            wed = b.wed(eps)
            y, _ = wed_minimize(wed, u, **_inner(plan))
            diff = y - flow_y
            return {"epsilon": eps, "c0_dist": norm_c0(diff),
                    "hsigma_dist": norm_hsigma(diff, plan.sigma), "h1_proxy": velocity_l2(diff),
                    "regularity": float(regularity_terms(wed, y, u)["total"]), "status": "ok",
                    "_y": y}
        return _guard(run, FIXED_COLUMNS, "epsilon", eps)

    rows = _map_rows(row, plan.epsilons, plan.threads)
    prev = None
    for r in rows:
        y = r.pop("_y", None)
        r["cauchy_c0"] = norm_c0(y - prev) if (y is not None and prev is not None) else float("nan")
        prev = y
    return rows


def gamma_liminf_probe(plan, epsilons=None, reference=None):
    """Recovery-sequence probe at the control ``plan.u_hat``.

    For each eps, evaluates the bilevel objective at the recovery pair
    ``(y_eps^u, u)`` and its gap to the limit objective ``J(S(u), u)``.
    ``reference`` may supply the limit value (e.g. a closed form); by default
    it is the target along the discrete gradient flow.
    """
    b = plan.bundle
    eps_list = plan.epsilons if epsilons is None else [float(e) for e in epsilons]
    if plan.u_hat is None:
        raise ParameterError("gamma probe needs u_hat in the plan")
    u = b.family.point(plan.u_hat)
    if reference is None:
        reference = eval_J(b.target, _flow_of(b, u), u)

    def row(eps):
        def run():
            y, _ = wed_minimize(b.wed(eps), u, **_inner(plan))
            val = eval_J(b.target, y, u)
            return {"epsilon": eps, "P_eps_value": val, "P_value": float(reference),
                    "gap": abs(val - reference), "status": "ok"}
        return _guard(run, GAMMA_COLUMNS, "epsilon", eps)

    return _map_rows(row, eps_list, plan.threads)


# -- assertion helpers ----------------------------------------------------------

def _params(u):
    p = u.params
    return float(p[0]) if p.size == 1 else p.tolist()


def monotone_trend(values, wiggle=WIGGLE):
    """Last entry not above the first, and no step up by more than ``wiggle``
    of the current value."""
    v = [float(x) for x in values]
    if len(v) < 2:
        return True
    if any(not np.isfinite(x) for x in v):
        return False
    return v[-1] <= v[0] and all(b <= a + wiggle * abs(a) for a, b in zip(v, v[1:]))


def strictly_decreasing(values):
    v = [float(x) for x in values]
    return all(np.isfinite(x) for x in v) and all(b < a for a, b in zip(v, v[1:]))


def cauchy_rate_fit(epsilons, distances, slack=WIGGLE):
    """Fit ``C`` on the first pair of levels and check all pairs.

    ``distances[i]`` is the C0 distance between levels ``eps[i]`` and
    ``eps[i+1]``. Returns ``(C, ratios, ok)`` where ``ratios[i]`` is
    ``distances[i] / sqrt(eps[i] + eps[i+1])``.
    """
    eps = [float(e) for e in epsilons]
    d = [float(x) for x in distances]
    ratios = [di / math.sqrt(a + b) for di, a, b in zip(d, eps, eps[1:])]
    if not ratios:
        return float("nan"), [], True
    C = ratios[0]
    ok = all(r <= (1.0 + slack) * C for r in ratios)
    return C, ratios, ok


def summarize(kind, rows, limit=None):
    """Pass/fail assertions for a sweep table.

    ``limit`` is an optional ``(u_limit, value_limit)`` of the unregularized
    problem used for the convergence checks.
    """
    ok_rows = [r for r in rows if r.get("status") == "ok"]
    out = {"kind": kind, "rows": len(rows), "ok_rows": len(ok_rows), "assertions": {}}
    a = out["assertions"]
    if kind == "sweep-eps" and ok_rows:
        a["c0_trend"] = monotone_trend([r["c0_dist"] for r in ok_rows])
        if limit is not None:
            a["u_star_trend"] = monotone_trend([np.linalg.norm(np.subtract(r["u_star"], limit[0]))
                                               for r in ok_rows])
            a["value_trend"] = monotone_trend([abs(r["value"] - limit[1]) for r in ok_rows])
    elif kind == "sweep-lambda" and ok_rows:
        a["h1_decreasing"] = strictly_decreasing([r["h1_dist"] for r in ok_rows])
        a["penalty_bound"] = all(r["penalty_residual"] <= r["lambda"] * r["value"]
                                 for r in ok_rows)
    elif kind == "sweep-joint" and ok_rows:
        a["coercivity_bound"] = all(r["bound_ok"] for r in ok_rows)
        if limit is not None:
            a["u_star_trend"] = monotone_trend([np.linalg.norm(np.subtract(r["u_star"], limit[0]))
                                               for r in ok_rows])
    elif kind == "gamma-probe" and ok_rows:
        a["gap_trend"] = monotone_trend([r["gap"] for r in ok_rows])
    elif kind == "fixed-control" and ok_rows:
        a["c0_trend"] = monotone_trend([r["c0_dist"] for r in ok_rows])
        dist = [r["cauchy_c0"] for r in ok_rows[1:]]
        C, ratios, ok = cauchy_rate_fit([r["epsilon"] for r in ok_rows], dist)
        a["cauchy_rate"] = ok
        out["cauchy_C"] = C
    out["passed"] = bool(all(a.values())) if a else False
    return out


def limit_solution(plan):
    """Optimal control of the unregularized problem, for reference columns."""
    pair = solve_P(plan.bundle.target, plan.bundle.flow(), plan.bundle.family, plan.options)
    return _params(pair.u), pair.value


def write_table_csv(rows, columns, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, list):
        return " ".join(repr(float(v)) for v in x)
    return x
