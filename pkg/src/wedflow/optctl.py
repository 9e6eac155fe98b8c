"""Target functionals and the three control-problem solvers.

All three problems share one deterministic outer search over the control
box (lattice, then bounded Nelder-Mead, then a tighter polish). They differ
in the inner map from a control to a state:

* ``solve_P``: the gradient flow itself (implicit Euler);
* ``solve_P_eps``: the WED minimizer (bilevel problem);
* ``solve_P_eps_lambda``: joint minimization of
  ``J(y, u) + (W(y, u) - M(u)) / lam`` over ``y`` for each ``u``.
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .core import SolveReport, Trajectory, _Timer, render_control
from .exceptions import InputError, ParameterError, SolverError
from .expressions import compile_expression
from .flow import solve_gradient_flow
from .validation import check_scalar, check_state
from .wed import _control_array, _minimize, wed_minimize, wed_value

log = logging.getLogger(__name__)

__all__ = [
    "TargetFunctional", "OptimalPair", "SolverOptions", "eval_J",
    "solve_P", "solve_P_eps", "solve_P_eps_lambda", "penalized_state",
]

TIE_TOL = 1e-12
MAX_LATTICE = 4096


def _profile(spec, d, vector):
    """Turn a constant, expression, or callable into ``f(t) -> array``."""
    if callable(spec):
        return spec
    if vector:
        items = [spec] * d if isinstance(spec, (str, int, float)) else list(spec)
        if len(items) != d:
            raise InputError(f"profile {spec!r} has {len(items)} components, expected {d}")
        fns = [compile_expression(x) for x in items]

        def f(t):
            return np.stack([g(t) for g in fns], axis=-1)

        f.expression = items
        return f
    g = compile_expression(spec)
    return g


class TargetFunctional:
    """Tracking functional

    ``J(y, u) = w_f/2 |y(T) - y_T|^2 + 1/2 int w_y |y - y_ref|^2 + 1/2 int w_u |u - u_ref|^2``

    with nonnegative weights, so ``J >= 0``. Time profiles may be constants,
    expression strings in ``t`` or callables.
    """

    def __init__(self, d=1, w_f=0.0, y_T=None, w_y=0.0, y_ref=0.0, w_u=0.0, u_ref=0.0):
        self.d = int(d)
        self.w_f = check_scalar(float(w_f), "w_f", lower=0.0)
        self.y_T = np.zeros(self.d) if y_T is None else check_state(y_T, self.d, "y_T")
        self.w_y = _profile(w_y, self.d, vector=False)
        self.y_ref = _profile(y_ref, self.d, vector=True)
        self.w_u = _profile(w_u, self.d, vector=False)
        self.u_ref = _profile(u_ref, self.d, vector=True)
        self._cache = {}

    def on_grid(self, grid):
        """Nodal samples ``(w_y, y_ref, w_u, u_ref)``; weights must be >= 0."""
        hit = self._cache.get(grid)
        if hit is None:
            t = grid.nodes
            w_y = np.broadcast_to(np.asarray(self.w_y(t), dtype=float), t.shape).copy()
            w_u = np.broadcast_to(np.asarray(self.w_u(t), dtype=float), t.shape).copy()
            y_ref = np.broadcast_to(np.asarray(self.y_ref(t), dtype=float).reshape(t.size, -1),
                                    (t.size, self.d)).copy()
            u_ref = np.broadcast_to(np.asarray(self.u_ref(t), dtype=float).reshape(t.size, -1),
                                    (t.size, self.d)).copy()
            for name, arr in (("w_y", w_y), ("w_u", w_u), ("y_ref", y_ref), ("u_ref", u_ref)):
                if not np.all(np.isfinite(arr)):
                    raise InputError(f"target profile {name} is not finite on the grid")
            if np.any(w_y < 0) or np.any(w_u < 0):
                raise InputError("target weights must be nonnegative")
            hit = (w_y, y_ref, w_u, u_ref)
            self._cache[grid] = hit
        return hit

    def state_quadratic(self, grid):
        """Diagonal weights ``D`` and centers ``R`` with
        ``J_y(y) = 1/2 sum_j D_j |y_j - R_j|^2 + const``."""
        w_y, y_ref, _, _ = self.on_grid(grid)
        D = grid.trapezoid_weights * w_y
        R = y_ref.copy()
        if self.w_f > 0:
            DN = D[-1] + self.w_f
            R[-1] = (D[-1] * y_ref[-1] + self.w_f * self.y_T) / DN
            D = D.copy()
            D[-1] = DN
        return D, R

    def describe(self):
        def expr(f):
            return getattr(f, "expression", repr(f))
        return {"w_f": self.w_f, "y_T": self.y_T.tolist(), "w_y": expr(self.w_y),
                "y_ref": expr(self.y_ref), "w_u": expr(self.w_u), "u_ref": expr(self.u_ref)}


def _parts_J(J, y, U):
    w_y, y_ref, w_u, u_ref = J.on_grid(y.grid)
    tw = y.grid.trapezoid_weights
    dy = y.values - y_ref
    du = U - u_ref
    terminal = 0.5 * J.w_f * float(np.sum((y.values[-1] - J.y_T) ** 2))
    state = 0.5 * float(np.dot(tw * w_y, np.sum(dy * dy, axis=1)))
    control = 0.5 * float(np.dot(tw * w_u, np.sum(du * du, axis=1)))
    return terminal, state, control


def eval_J(J, y, u):
    """Trapezoidal evaluation of the target functional."""
    U = u.values if isinstance(u, Trajectory) else render_control(u, y.grid).values
    if U.shape != y.values.shape:
        raise InputError("state and control shapes do not match")
    return float(sum(_parts_J(J, y, U)))


@dataclass
class OptimalPair:
    y: Trajectory
    u: object
    value: float
    report: SolveReport
    J_part: float
    penalty_part: float = 0.0

    def to_record(self):
        return {
            "u_params": self.u.params.tolist(),
            "value": float(self.value),
            "J_part": float(self.J_part),
            "penalty_part": float(self.penalty_part),
            "iterations": int(self.report.iterations),
            "wall_time": float(self.report.wall_time),
        }


@dataclass
class SolverOptions:
    """Knobs of the outer search and inner solvers."""

    lattice: int = 11
    tol: float = 1e-10
    max_iter: int = None
    threads: int = 1
    nm_maxfev: int = 400
    xatol: float = 1e-9
    fatol: float = 1e-15
    extra: dict = field(default_factory=dict)


def _lattice(family, L):
    m = family.m
    if L ** m > MAX_LATTICE:
        L = max(2, int(MAX_LATTICE ** (1.0 / m)))
    axes = [np.unique(np.linspace(lo, hi, L)) for lo, hi in zip(family.lower, family.upper)]
    return [np.array(p) for p in itertools.product(*axes)], axes


def _outer_search(family, evaluate, opts):
    """Deterministic lattice + bounded Nelder-Mead + polish.

    ``evaluate(params) -> (value, payload)``; solver failures are skipped.
    Returns ``(best_params, best_value, payload, stats)``.
    """
    memo = {}
    failures = []

    def cached(params):
        p = np.clip(np.asarray(params, dtype=float), family.lower, family.upper)
        key = tuple(float(x) for x in p)
        if key not in memo:
            try:
                memo[key] = evaluate(p)
            except SolverError as exc:
                log.warning("inner solve failed at params %s: %s", list(key), exc)
                failures.append(key)
                memo[key] = (np.inf, None)
        return memo[key][0]

    points, axes = _lattice(family, opts.lattice)
    threads = max(1, int(opts.threads or 1))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_safe(evaluate), points))
        for p, r in zip(points, results):
            key = tuple(float(x) for x in p)
            if r is None:
                failures.append(key)
                memo[key] = (np.inf, None)
            else:
                memo[key] = r
    else:
        for p in points:
            cached(p)
    lattice_keys = [tuple(float(x) for x in p) for p in points]
    if all(not np.isfinite(memo[k][0]) for k in lattice_keys):
        raise SolverError("every lattice point failed in the inner solver")

    def best_key():
        finite = [(v[0], k) for k, v in memo.items() if np.isfinite(v[0])]
        vmin = min(v for v, _ in finite)
        ties = sorted(k for v, k in finite if v <= vmin + TIE_TOL)
        return ties[0]

    start = np.array(best_key())
    spacing = np.array([(ax[1] - ax[0]) if ax.size > 1 else 0.0 for ax in axes])
    free = spacing > 0
    nm_evals = 0
    polish_evals = 0
    if np.any(free):
        scales = (1.0,) if np.count_nonzero(free) == 1 else (1.0, 1e-2)
        for scale in scales:
            x0 = np.array(best_key())
            simplex = [x0.copy()]
            for i in np.flatnonzero(free):
                v = x0.copy()
                step = scale * spacing[i]
                v[i] = x0[i] + step if x0[i] + step <= family.upper[i] else x0[i] - step
                simplex.append(v)
            idx = np.flatnonzero(free)

            def f_free(z, x0=x0, idx=idx):
                p = x0.copy()
                p[idx] = z
                return cached(p)

            res = minimize(
                f_free, x0[idx], method="Nelder-Mead",
                bounds=list(zip(family.lower[idx], family.upper[idx])),
                options={"initial_simplex": np.array(simplex)[:, idx],
                         "xatol": opts.xatol, "fatol": opts.fatol,
                         "maxfev": opts.nm_maxfev})
            nm_evals += int(res.nfev)
        if np.count_nonzero(free) == 1:
            # one free axis: bounded Brent polish around the incumbent
            i = int(np.flatnonzero(free)[0])
            x0 = np.array(best_key())
            lo = max(family.lower[i], x0[i] - spacing[i])
            hi = min(family.upper[i], x0[i] + spacing[i])

            def f_axis(z, x0=x0, i=i):
                p = x0.copy()
                p[i] = z
                return cached(p)

            res = minimize_scalar(f_axis, bounds=(lo, hi), method="bounded",
                                  options={"xatol": opts.xatol, "maxiter": opts.nm_maxfev})
            polish_evals = int(res.nfev)
    key = best_key()
    stats = {"lattice_points": len(points), "nelder_mead_evals": nm_evals,
             "polish_evals": polish_evals,
             "evaluations": len(memo), "failures": len(failures), "start": start.tolist(),
             "lattice_best": float(min(memo[k][0] for k in lattice_keys))}
    return np.array(key), memo[key][0], memo[key][1], stats


def _safe(evaluate):
    def run(p):
        try:
            return evaluate(p)
        except SolverError as exc:
            log.warning("inner solve failed at params %s: %s", p.tolist(), exc)
            return None
    return run


def _finish(family, evaluate, opts, clock_start=None):
    with _Timer() as clock:
        params, value, payload, stats = _outer_search(family, evaluate, opts)
    y, J_part, penalty, inner_iters = payload
    report = SolveReport(iterations=stats["evaluations"], final_residual=0.0,
                         functional_value=value, converged=True, wall_time=clock.elapsed,
                         tolerance=opts.tol, extra=dict(stats, inner_iterations=inner_iters))
    return OptimalPair(y=y, u=family.point(params), value=float(value), report=report,
                       J_part=float(J_part), penalty_part=float(penalty))


def _check_family(U):
    if U.m > 16:
        raise ParameterError(f"control family dimension m={U.m} exceeds the supported 16")


def solve_P(J, flow, U, opts=None):
    """Optimal control of the gradient flow itself."""
    opts = opts or SolverOptions()
    _check_family(U)

    def evaluate(params):
        u = U.point(params)
        y, rep = solve_gradient_flow(flow, u)
        val = eval_J(J, y, u)
        return val, (y, val, 0.0, rep.iterations)

    return _finish(U, evaluate, opts)


def solve_P_eps(J, wed, U, opts=None):
    """Bilevel problem: the state is the WED minimizer of the control."""
    opts = opts or SolverOptions()
    _check_family(U)

    def evaluate(params):
        u = U.point(params)
        y, rep = wed_minimize(wed, u, tol=opts.tol, max_iter=opts.max_iter)
        val = eval_J(J, y, u)
        return val, (y, val, 0.0, rep.iterations)

    return _finish(U, evaluate, opts)


def penalized_state(J, wed, u, lam, tol=1e-10, max_iter=None):
    """Minimize ``J(., u) + (W(., u) - M(u))/lam`` over pinned trajectories.

    Warm-started at the WED minimizer. Returns
    ``(y, value, J_part, penalty_part, report)``.
    """
    lam = check_scalar(lam, "lambda", lower=0, lower_inclusive=False)
    ystar, _ = wed_minimize(wed, u, tol=tol, max_iter=max_iter)
    key = ("M", id(u.family) if not isinstance(u, Trajectory) else "traj",
           u.key() if not isinstance(u, Trajectory) else u.values.tobytes())
    M = wed._cache_get(key)
    if M is None:
        M = wed_value(wed, ystar, u)
        wed._cache_put(key, M)
    Uarr = _control_array(wed, u)
    D, R = J.state_quadratic(wed.grid)
    Y, report = _minimize(wed, Uarr, addon=(lam * D, R), y_init=ystar, tol=tol, max_iter=max_iter)
    y = Trajectory(wed.grid, Y)
    if not report.converged:
        raise SolverError(
            f"penalized inner solve did not converge (residual {report.final_residual:.3e})",
            best=y, report=report)
    gap = wed_value(wed, y, u) - M
    if gap < -1e-9 * (1.0 + abs(M)):
        raise SolverError(f"penalty became negative ({gap:.3e}): WED minimizer inaccurate",
                          best=y, report=report)
    gap = max(gap, 0.0)
    J_part = eval_J(J, y, u)
    # curvature added by the target relative to the WED node weights
    report.extra["condition_estimate"] = float(1.0 + lam * np.max(D[1:] / wed.node_weights[1:]))
    report.extra["M_eps"] = float(M)
    return y, J_part + gap / lam, J_part, gap / lam, report


def solve_P_eps_lambda(J, wed, U, lam, opts=None):
    """Penalized problem minimized jointly over trajectories and controls."""
    opts = opts or SolverOptions()
    _check_family(U)
    lam = check_scalar(lam, "lambda", lower=0, lower_inclusive=False)

    def evaluate(params):
        u = U.point(params)
        y, val, J_part, pen, rep = penalized_state(J, wed, u, lam, tol=opts.tol,
                                                   max_iter=opts.max_iter)
        return val, (y, J_part, pen, rep.iterations)

    pair = _finish(U, evaluate, opts)
    pair.report.extra["lambda"] = lam
    return pair
