"""Discrete weighted energy-dissipation (WED) functional and its minimizer.

For a uniform grid with nodes ``t_k`` the functional is

    W(y, u) = sum_k mu_k * eps/2 * |(y_{k+1} - y_k)/h|^2
              + sum_j c_j * (phi(y_j) - (u_j, y_j))

where ``mu_k`` is the exact mass of ``exp(-t/eps)`` on cell ``k`` and
``c_j`` are the exact weights of the piecewise-linear hat functions against
the same weight. The initial node is pinned to ``y0``; the terminal
condition ``eps * y'(T) = 0`` is never imposed and emerges as the natural
condition of the last cell.
"""

import threading

import numpy as np
from scipy.linalg import LinAlgError, solve_banded, solveh_banded

from .core import SolveReport, Trajectory, _Timer, norm_h1, render_control
from .exceptions import DomainError, InputError, ParameterError, SolverError
from .validation import check_scalar, check_state

__all__ = [
    "WedProblem", "wed_value", "wed_minimize", "m_eps", "lemma1_value",
    "coercivity_gap", "wed_subgradients", "euler_lagrange_residual",
    "regularity_terms", "epsilon0",
]

MAX_EXPONENT = 700.0


def epsilon0(kappa):
    """Upper bound on eps keeping the discrete functional uniformly convex."""
    return np.inf if kappa >= 0 else 1.0 / (4.0 * (-kappa))


def _hat_weights(x):
    # integral over [0, h] of s/h * exp(-s/eps), divided by eps^2/h, as a function of x = h/eps
    x = np.asarray(x, dtype=float)
    small = x < 1e-2
    series = x * x * (0.5 - x / 3.0 + x * x / 8.0 - x ** 3 / 30.0 + x ** 4 / 144.0)
    direct = -np.expm1(-x) - x * np.exp(-x)
    return np.where(small, series, direct)


class WedProblem:
    """Data of one WED minimization: energy, initial state, grid and eps.

    Parameters
    ----------
    energy : Energy
    y0 : array_like
        Pinned initial state; must lie in the domain of the subdifferential.
    grid : TimeGrid
    epsilon : float
        Must satisfy ``0 < eps < epsilon0(kappa)`` and ``T/eps <= 700`` so
        that the exponential weights stay representable.
    """

    def __init__(self, energy, y0, grid, epsilon, check_convexity=True):
        self.energy = energy
        self.y0 = check_state(y0, name="y0")
        self.y0.flags.writeable = False
        self.grid = grid
        self.epsilon = check_scalar(epsilon, "epsilon", lower=0, lower_inclusive=False)
        eps0 = epsilon0(energy.kappa)
        if self.epsilon >= eps0:
            raise ParameterError(
                f"epsilon={self.epsilon} violates the convexity guard epsilon < epsilon0 = "
                f"1/(4|kappa|) = {eps0:g}")
        if grid.T / self.epsilon > MAX_EXPONENT:
            raise ParameterError(
                f"epsilon={self.epsilon} too small for T={grid.T}: exp(-T/epsilon) underflows "
                f"(need T/epsilon <= {MAX_EXPONENT:g})")
        try:
            energy.minimal_section(self.y0)
        except DomainError as exc:
            raise DomainError(
                f"initial state not in the domain of the subdifferential: {exc}") from None

        eps, h, t = self.epsilon, grid.h, grid.nodes
        decay = np.exp(-t[:-1] / eps)
        x = h / eps
        self.masses = decay * eps * (-np.expm1(-x))
        right = decay * (eps * eps / h) * _hat_weights(x)
        left = self.masses - right
        c = np.zeros(grid.N + 1)
        c[:-1] += left
        c[1:] += right
        self.node_weights = c
        # coefficient of |y_{k+1} - y_k|^2 in the kinetic term
        self.kinetic = eps * self.masses / (2.0 * h * h)
        for arr in (self.masses, self.node_weights, self.kinetic):
            arr.flags.writeable = False
        if np.any(self.masses <= 0) or np.any(c <= 0):
            raise ParameterError("exponential cell masses underflowed; increase epsilon")

        self._cache = {}
        self._lock = threading.Lock()
        if check_convexity and energy.kappa < 0:
            self._probe_convexity()

    @property
    def d(self):
        return self.y0.size

    def __repr__(self):
        return (f"WedProblem({type(self.energy).__name__}, eps={self.epsilon}, "
                f"N={self.grid.N}, d={self.d})")

    def _probe_convexity(self, pairs=6, seed=0):
        rng = np.random.default_rng(seed)
        zero = np.zeros((self.grid.N + 1, self.d))
        for _ in range(pairs):
            A = self._pinned(rng.uniform(-2, 2, size=zero.shape))
            B = self._pinned(rng.uniform(-2, 2, size=zero.shape))
            mid = _objective(self, 0.5 * (A + B), zero)
            avg = 0.5 * _objective(self, A, zero) + 0.5 * _objective(self, B, zero)
            if mid > avg + 1e-12 * (1.0 + abs(avg)):
                raise ParameterError(
                    f"discrete WED functional failed the midpoint convexity probe at "
                    f"epsilon={self.epsilon}; reduce epsilon")

    def _pinned(self, Y):
        Y = np.array(Y, dtype=float)
        Y[0] = self.y0
        return Y

    # cache of (trajectory, report, value) per control
    def _cache_get(self, key):
        with self._lock:
            return self._cache.get(key)

    def _cache_put(self, key, item):
        with self._lock:
            self._cache[key] = item


def _control_array(p, u):
    U = u if isinstance(u, Trajectory) else render_control(u, p.grid)
    if U.grid != p.grid:
        raise InputError("control rendered on a different grid than the WED problem")
    if U.d != p.d:
        raise InputError(f"control dimension {U.d} does not match state dimension {p.d}")
    return U.values


def _cache_key(u):
    if isinstance(u, Trajectory):
        return ("traj", u.values.tobytes())
    return (id(u.family), u.key())


# -- functional and derivatives on raw arrays --------------------------------

def _kinetic_value(p, Y):
    dY = np.diff(Y, axis=0)
    return float(np.dot(p.kinetic, np.sum(dY * dY, axis=1)))


def _kinetic_grad(p, Y):
    dY = np.diff(Y, axis=0) * (2.0 * p.kinetic)[:, None]
    G = np.zeros_like(Y)
    G[1:] += dY
    G[:-1] -= dY
    return G


def _objective(p, Y, U, addon=None):
    phi = p.energy.values(Y)
    if not np.all(np.isfinite(phi)):
        return np.inf
    val = _kinetic_value(p, Y) + float(np.dot(p.node_weights, phi - np.sum(U * Y, axis=1)))
    if addon is not None:
        D, R = addon
        diff = Y - R
        val += 0.5 * float(np.dot(D, np.sum(diff * diff, axis=1)))
    return val


def wed_value(p, y, u):
    """Discrete WED functional; ``+inf`` off the admissible set.

    The admissible set consists of trajectories on ``p.grid`` whose first
    node equals ``y0`` and whose nodes all lie in the energy's domain.
    """
    if not isinstance(y, Trajectory) or y.grid != p.grid:
        raise InputError("trajectory must live on the problem grid")
    if y.d != p.d:
        raise InputError(f"trajectory dimension {y.d} does not match state dimension {p.d}")
    U = _control_array(p, u)
    Y = y.values
    if not np.allclose(Y[0], p.y0, rtol=0, atol=1e-12 * (1.0 + np.abs(p.y0).max())):
        return np.inf
    if not np.all(p.energy.in_domain(Y)):
        return np.inf
    return _objective(p, Y, U)


def wed_subgradients(p, y, u):
    """Discrete subgradient selection ``eta_j`` at nodes ``1..N``.

    Read off the discrete Euler-Lagrange system:
    ``eta_j = u_j - (dK/dy_j) / c_j`` where ``K`` is the kinetic part. For a
    stationary trajectory of a smooth energy this equals ``grad phi(y_j)``.
    """
    U = _control_array(p, u)
    G = _kinetic_grad(p, y.values)
    return U[1:] - G[1:] / p.node_weights[1:, None]


def euler_lagrange_residual(p, y, u):
    """Nodal residual of ``-eps y'' + y' + grad phi(y) - u`` (smooth energies).

    Equals the gradient of the discrete functional divided by the node
    weights, so it vanishes exactly at the discrete minimizer.
    """
    U = _control_array(p, u)
    Y = y.values
    G = _kinetic_grad(p, Y)[1:] + p.node_weights[1:, None] * (p.energy.grad_nodes(Y[1:]) - U[1:])
    return G / p.node_weights[1:, None]


# -- minimizers ---------------------------------------------------------------

def _banded_hessian(p, Y, addon):
    """Upper banded storage of the block-tridiagonal Hessian in y_1..y_N."""
    N, d = p.grid.N, p.d
    a2 = 2.0 * p.kinetic
    diag_scalar = a2.copy()
    diag_scalar[:-1] += a2[1:]
    if addon is not None:
        diag_scalar = diag_scalar + addon[0][1:]
    blocks = p.node_weights[1:, None, None] * p.energy.hess_nodes(Y[1:])
    blocks = blocks + diag_scalar[:, None, None] * np.eye(d)[None]
    ab = np.zeros((d + 1, N * d))
    for q in range(d):
        for r in range(q + 1):
            ab[d + r - q, q::d] = blocks[:, r, q]
    ab[0, d:] = np.repeat(-a2[1:], d)
    return ab


def _scaled_solve(ab, rhs):
    u = ab.shape[0] - 1
    diag = ab[u].copy()
    if np.any(diag <= 0):
        return None
    s = 1.0 / np.sqrt(diag)
    sab = ab.copy()
    for off in range(1, u + 1):
        sab[u - off, off:] *= s[:-off] * s[off:]
    sab[u] = 1.0
    try:
        z = solveh_banded(sab, s * rhs, lower=False, check_finite=False)
    except LinAlgError:
        return None
    return s * z


def _general_solve(ab, rhs, shift):
    u = ab.shape[0] - 1
    n = ab.shape[1]
    full = np.zeros((2 * u + 1, n))
    full[:u + 1] = ab
    for off in range(1, u + 1):
        full[u + off, :-off] = ab[u - off, off:]
    full[u] += shift
    return solve_banded((u, u), full, rhs, check_finite=False)


def _residual_scale(p, Y, U, addon, sub):
    # sum of magnitudes of the terms entering each gradient entry
    a2 = 2.0 * p.kinetic[:, None]
    A = np.abs(Y)
    S = np.zeros_like(Y)
    S[1:] += a2 * (A[1:] + A[:-1])
    S[:-1] += a2 * (A[1:] + A[:-1])
    S += p.node_weights[:, None] * (np.abs(sub) + np.abs(U))
    if addon is not None:
        S += addon[0][:, None] * (A + np.abs(addon[1]))
    return S[1:]


def _minimize_smooth(p, U, addon, Y, tol, max_iter):
    energy = p.energy
    c = p.node_weights[1:, None]
    f = _objective(p, Y, U, addon)
    history = []
    res = np.inf
    for it in range(max_iter + 1):
        grad_phi = energy.grad_nodes(Y)
        G = _kinetic_grad(p, Y)[1:] + c * (grad_phi[1:] - U[1:])
        if addon is not None:
            G += addon[0][1:, None] * (Y[1:] - addon[1][1:])
        scale = _residual_scale(p, Y, U, addon, grad_phi)
        res = float(np.max(np.abs(G) / (scale + 1e-300)))
        history.append(res)
        if res <= tol:
            return Y, f, it, res, True
        if it == max_iter:
            break
        ab = _banded_hessian(p, Y, addon)
        g = G.ravel()
        step = _scaled_solve(ab, -g)
        shift = 0.0
        while step is None or float(np.dot(step, g)) >= 0:
            shift = max(1e-8 * float(np.max(np.abs(ab[-1]))), 10.0 * shift)
            step = _general_solve(ab, -g, shift)
            if shift > 1e12 * float(np.max(np.abs(ab[-1]))):
                step = -g
                break
        step = step.reshape(-1, p.d)
        slope = float(np.dot(step.ravel(), g))
        alpha = 1.0
        while True:
            trial = Y.copy()
            trial[1:] += alpha * step
            ft = _objective(p, trial, U, addon)
            if ft <= f + 1e-4 * alpha * slope or alpha < 1e-12:
                break
            alpha *= 0.5
        if alpha < 1e-12 and not ft < f:
            # line search stalled: accept the full Newton step if it reduces the gradient
            trial = Y.copy()
            trial[1:] += step
            ft = _objective(p, trial, U, addon)
        Y, f = trial, ft
    return Y, f, max_iter, res, False


def _minimize_prox(p, U, addon, Y, tol, max_iter):
    """Accelerated proximal gradient in the node-weight metric with adaptive restart."""
    energy = p.energy
    c = p.node_weights
    a2 = 2.0 * p.kinetic
    row = np.zeros(p.grid.N + 1)
    row[1:] += 2.0 * a2
    row[:-1] += 2.0 * a2
    if addon is not None:
        row = row + addon[0]
    L = float(np.max(row[1:] / c[1:]))
    step = 1.0 / L
    if 1.0 + step * energy.kappa <= 0:
        raise ParameterError("proximal-gradient step incompatible with kappa")

    def smooth_grad(Z):
        G = _kinetic_grad(p, Z) - c[:, None] * U
        if addon is not None:
            G += addon[0][:, None] * (Z - addon[1])
        return G / c[:, None]

    def prox_step(Z):
        W = Z - step * smooth_grad(Z)
        out = energy.prox_nodes(W, step)
        out[0] = p.y0
        return out

    Y = p._pinned(energy.project_domain(Y))
    X_prev = Y.copy()
    Z = Y.copy()
    theta = 1.0
    res = np.inf
    for it in range(1, max_iter + 1):
        X = prox_step(Z)
        res = float(np.max(np.abs(X - Z))) / (step + float(np.max(np.abs(X))))
        if res <= tol:
            Y = X
            return Y, _objective(p, Y, U, addon), it, res, True
        # gradient-based restart
        if float(np.sum((Z - X) * (X - X_prev))) > 0:
            theta = 1.0
            Z = X.copy()
        else:
            theta_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta * theta))
            Z = X + ((theta - 1.0) / theta_next) * (X - X_prev)
            theta = theta_next
        X_prev = X
    Y = X_prev
    return Y, _objective(p, Y, U, addon), max_iter, res, False


def _minimize(p, U, addon=None, y_init=None, tol=1e-10, max_iter=None):
    if y_init is None:
        Y = np.tile(p.y0, (p.grid.N + 1, 1))
    else:
        Y = np.array(y_init.values if isinstance(y_init, Trajectory) else y_init, dtype=float)
        if Y.shape != (p.grid.N + 1, p.d):
            raise InputError("initial guess has the wrong shape")
    Y = p._pinned(Y)
    with _Timer() as clock:
        if p.energy.smooth:
            out = _minimize_smooth(p, U, addon, Y, tol, max_iter or 200)
            method = "newton"
        else:
            out = _minimize_prox(p, U, addon, Y, tol, max_iter or 500_000)
            method = "proximal-gradient"
    Y, f, iters, res, ok = out
    report = SolveReport(iterations=iters, final_residual=res, functional_value=f,
                         converged=ok, wall_time=clock.elapsed, tolerance=tol,
                         extra={"method": method})
    return Y, report


def wed_minimize(p, u, tol=1e-10, max_iter=None, y_init=None):
    """Minimize the discrete WED functional over trajectories pinned at ``y0``.

    Smooth energies use damped Newton on the block-tridiagonal stationarity
    system; prox-only energies use accelerated proximal gradient with
    adaptive restart. ``tol`` bounds the scaled first-order residual.

    Raises
    ------
    SolverError
        When the iteration budget runs out; ``err.best`` holds the best
        trajectory found.
    """
    key = _cache_key(u)
    hit = p._cache_get(("min", key, tol))
    if hit is not None:
        return hit[0], hit[1]
    U = _control_array(p, u)
    Y, report = _minimize(p, U, y_init=y_init, tol=tol, max_iter=max_iter)
    y = Trajectory(p.grid, Y)
    if not report.converged:
        raise SolverError(
            f"WED minimization did not converge in {report.iterations} iterations "
            f"(residual {report.final_residual:.3e} > tol {tol:.1e})", best=y, report=report)
    p._cache_put(("min", key, tol), (y, report))
    return y, report


def m_eps(p, u, tol=1e-10):
    """Minimum value of the discrete WED functional for control ``u``."""
    y, _ = wed_minimize(p, u, tol=tol)
    return wed_value(p, y, u)


def lemma1_value(p, u, tol=1e-10):
    """Alternative expression for the WED minimum built from the minimizer.

    Evaluates ``-eps^2/2 |y'(0)|^2 - eps e^{-T/eps} phi(y(T)) + eps phi(y0)
    + eps int e^{-t/eps} (u, y') - int e^{-t/eps} (u, y)`` with a one-sided
    second-order difference for ``y'(0)``. It agrees with :func:`m_eps` up to
    the discretization error.
    """
    y, _ = wed_minimize(p, u, tol=tol)
    U = _control_array(p, u)
    Y = y.values
    eps, h, T = p.epsilon, p.grid.h, p.grid.T
    v0 = (-3.0 * Y[0] + 4.0 * Y[1] - Y[2]) / (2.0 * h)
    phi = p.energy.values(Y[[0, -1]])
    u_mid = 0.5 * (U[1:] + U[:-1])
    vel = np.diff(Y, axis=0) / h
    forcing_rate = float(np.dot(p.masses, np.sum(u_mid * vel, axis=1)))
    forcing = float(np.dot(p.node_weights, np.sum(U * Y, axis=1)))
    return float(-0.5 * eps * eps * np.dot(v0, v0) - eps * np.exp(-T / eps) * phi[1]
                 + eps * phi[0] + eps * forcing_rate - forcing)


def coercivity_gap(p, y, u, tol=1e-10):
    """Both sides of ``eps^3 e^{-T/eps} |y - y_eps^u|_{H1}^2 <= W(y, u) - M``.

    Returns ``(lhs, rhs)``; the caller decides on slack.
    """
    ystar, _ = wed_minimize(p, u, tol=tol)
    eps = p.epsilon
    lhs = eps ** 3 * np.exp(-p.grid.T / eps) * norm_h1(y - ystar) ** 2
    rhs = wed_value(p, y, u) - wed_value(p, ystar, u)
    return float(lhs), float(rhs)


def regularity_terms(p, y, u):
    """Discrete analogs of the terms in the eps-uniform regularity estimate.

    Returns a dict with ``eps*|y''|_{L2}``, ``eps^{1/2}*|y'|_{Linf}``,
    ``|y'|_{L2}``, ``|eta|_{L2}`` and their ``total``.
    """
    eps, h = p.epsilon, p.grid.h
    vel = y.velocity()
    acc = np.diff(vel, axis=0) / h
    eta = wed_subgradients(p, y, u)
    terms = {
        "eps_acc_l2": eps * float(np.sqrt(h * np.sum(acc * acc))),
        "sqrt_eps_vel_linf": np.sqrt(eps) * float(np.max(np.linalg.norm(vel, axis=1))),
        "vel_l2": float(np.sqrt(h * np.sum(vel * vel))),
        "eta_l2": float(np.sqrt(h * np.sum(eta * eta))),
    }
    terms["total"] = sum(terms.values())
    return terms
