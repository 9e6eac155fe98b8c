"""Time grids, trajectories, controls and the norm toolbox."""

import csv
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import ConstraintError, InputError
from .expressions import compile_expression
from .validation import check_finite_array, check_scalar

__all__ = [
    "TimeGrid", "Trajectory", "ControlFamily", "ControlPoint", "SolveReport",
    "norm_l2", "norm_h1", "norm_hsigma", "norm_c0", "velocity_l2",
    "render_control", "write_trajectory_csv", "read_trajectory_csv",
    "control_to_record", "control_from_record",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of ``[0, T]`` into ``N`` cells."""

    T: float
    N: int

    def __post_init__(self):
        object.__setattr__(self, "T", check_scalar(self.T, "T", lower=0, lower_inclusive=False))
        object.__setattr__(self, "N", check_scalar(self.N, "N", lower=2, integer=True))

    @property
    def h(self):
        return self.T / self.N

    @cached_property
    def nodes(self):
        t = np.arange(self.N + 1) * self.h
        t[-1] = self.T
        t.flags.writeable = False
        return t

    @cached_property
    def trapezoid_weights(self):
        w = np.full(self.N + 1, self.h)
        w[0] = w[-1] = 0.5 * self.h
        w.flags.writeable = False
        return w

    def refine(self, factor=2):
        return TimeGrid(self.T, self.N * factor)


class Trajectory:
    """Nodal values ``y_0..y_N`` of a curve in R^d on a :class:`TimeGrid`.

    Values are stored as a read-only ``(N+1, d)`` array.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid, values):
        arr = check_finite_array(values, "trajectory values")
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] != grid.N + 1:
            raise InputError(f"trajectory needs {grid.N + 1} nodes, got array of shape {arr.shape}")
        arr = np.array(arr, dtype=float)
        arr.flags.writeable = False
        self.grid = grid
        self.values = arr

    @property
    def d(self):
        return self.values.shape[1]

    @property
    def t(self):
        return self.grid.nodes

    @classmethod
    def from_function(cls, grid, f):
        return cls(grid, np.asarray(f(grid.nodes), dtype=float))

    @classmethod
    def constant(cls, grid, value):
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(grid, np.tile(v, (grid.N + 1, 1)))

    def velocity(self):
        """Forward differences ``(y_{k+1} - y_k)/h``, one per cell."""
        return np.diff(self.values, axis=0) / self.grid.h

    def _coerce(self, other):
        if isinstance(other, Trajectory):
            if other.grid != self.grid:
                raise InputError("trajectories live on different time grids")
            return other.values
        return other

    def __add__(self, other):
        return Trajectory(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Trajectory(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return Trajectory(self.grid, self._coerce(other) - self.values)

    def __mul__(self, alpha):
        return Trajectory(self.grid, float(alpha) * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return Trajectory(self.grid, -self.values)

    def __repr__(self):
        return f"Trajectory(N={self.grid.N}, T={self.grid.T}, d={self.d})"


def _basis_from_spec(spec, d):
    # a basis element is an expression or a list of d expressions
    if callable(spec):
        return spec
    exprs = [spec] * d if isinstance(spec, (str, int, float)) else list(spec)
    if len(exprs) != d:
        raise InputError(f"basis element {spec!r} has {len(exprs)} components, expected {d}")
    fns = [compile_expression(e) for e in exprs]

    def b(t):
        return np.stack([f(t) for f in fns], axis=-1)

    b.expression = exprs
    return b


class ControlFamily:
    """Compact finite-dimensional family of admissible controls.

    Two kinds are supported. ``"basis_box"`` spans ``u(t) = sum_i p_i b_i(t)``
    with box-constrained coefficients; ``"example_exp"`` is the one-parameter
    family ``u(t) = u0 * exp(-t)`` with ``u0 in [0, 1]``.
    """

    KINDS = ("basis_box", "example_exp")

    def __init__(self, kind, basis, lower, upper, d=1):
        if kind not in self.KINDS:
            raise InputError(f"unknown control family kind {kind!r}; expected one of {self.KINDS}")
        self.kind = kind
        self.d = int(d)
        self.basis = tuple(_basis_from_spec(b, self.d) for b in basis)
        self.lower = check_finite_array(lower, "lower bounds", ndim=1)
        self.upper = check_finite_array(upper, "upper bounds", ndim=1)
        m = len(self.basis)
        if m == 0 or self.lower.shape != (m,) or self.upper.shape != (m,):
            raise InputError(f"need one (lower, upper) pair per basis function, m={m}")
        if np.any(self.lower > self.upper):
            raise ConstraintError("empty control box: some lower bound exceeds its upper bound")
        self._cache = {}

    @classmethod
    def example_exp(cls):
        return cls("example_exp", ["exp(-t)"], [0.0], [1.0], d=1)

    @classmethod
    def basis_box(cls, basis, lower, upper, d=1):
        return cls("basis_box", basis, lower, upper, d=d)

    @property
    def m(self):
        return len(self.basis)

    def basis_values(self, grid):
        """``(m, N+1, d)`` samples of the basis on ``grid`` (cached per grid)."""
        B = self._cache.get(grid)
        if B is None:
            t = grid.nodes
            cols = []
            for b in self.basis:
                v = np.asarray(b(t), dtype=float)
                if v.ndim == 1:
                    v = v[:, None]
                cols.append(np.broadcast_to(v, (t.size, self.d)))
            B = np.array(cols)
            B.flags.writeable = False
            self._cache[grid] = B
        return B

    def contains(self, params, atol=1e-12):
        p = np.asarray(params, dtype=float)
        inside = np.all(p >= self.lower - atol) and np.all(p <= self.upper + atol)
        return p.shape == (self.m,) and bool(inside)

    def point(self, params):
        return ControlPoint(self, params)

    def describe(self):
        exprs = [getattr(b, "expression", repr(b)) for b in self.basis]
        return {"kind": self.kind, "basis": exprs, "lower": self.lower.tolist(),
                "upper": self.upper.tolist(), "d": self.d}

    def __repr__(self):
        return f"ControlFamily(kind={self.kind!r}, m={self.m}, d={self.d})"


class ControlPoint:
    """One member of a :class:`ControlFamily`."""

    __slots__ = ("family", "params")

    def __init__(self, family, params):
        p = np.atleast_1d(check_finite_array(params, "control params"))
        if not family.contains(p):
            raise ConstraintError(f"control params {p.tolist()} outside box "
                                  f"[{family.lower.tolist()}, {family.upper.tolist()}]")
        p = np.clip(p, family.lower, family.upper)
        p.flags.writeable = False
        self.family = family
        self.params = p

    def key(self):
        return tuple(float(x) for x in self.params)

    def __repr__(self):
        return f"ControlPoint({self.family.kind}, params={self.params.tolist()})"


def render_control(u, grid):
    """Nodal samples of the control ``u`` on ``grid``."""
    if not u.family.contains(u.params):
        raise ConstraintError("control params outside box")
    B = u.family.basis_values(grid)
    return Trajectory(grid, np.tensordot(u.params, B, axes=1))


@dataclass
class SolveReport:
    """Telemetry attached to every solver result."""

    iterations: int = 0
    final_residual: float = 0.0
    functional_value: float = float("nan")
    converged: bool = True
    wall_time: float = 0.0
    tolerance: float = float("nan")
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "iterations": int(self.iterations),
            "final_residual": float(self.final_residual),
            "functional_value": float(self.functional_value),
            "converged": bool(self.converged),
            "wall_time": float(self.wall_time),
            "tolerance": float(self.tolerance),
        }
        out.update({k: v for k, v in self.extra.items()})
        return out


class _Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


# -- norms -----------------------------------------------------------------

def _values(y):
    if not isinstance(y, Trajectory):
        raise InputError("expected a Trajectory")
    return y.values


def norm_l2(y):
    """Trapezoidal approximation of ``(int_0^T |y(t)|^2 dt)^(1/2)``."""
    v = _values(y)
    return float(np.sqrt(np.dot(y.grid.trapezoid_weights, np.sum(v * v, axis=1))))


def velocity_l2(y):
    """L2 norm of the piecewise-constant forward-difference velocity."""
    dv = y.velocity()
    return float(np.sqrt(y.grid.h * np.sum(dv * dv)))


def norm_h1(y):
    """Discrete H1 norm ``(|y|_{L2}^2 + |y'|_{L2}^2)^(1/2)``."""
    return float(np.hypot(norm_l2(y), velocity_l2(y)))


def norm_c0(y):
    """Max over nodes of the Euclidean norm."""
    return float(np.max(np.linalg.norm(_values(y), axis=1)))


def norm_hsigma(y, sigma=0.5, block=512):
    """Fractional Sobolev norm via the Gagliardo double sum.

    Computes ``(|y|_{L2}^2 + sum_{j != k} h^2 |y_j - y_k|^2 / |t_j - t_k|^(1+2 sigma))^(1/2)``
    over node samples. Cost is O(N^2); rows are processed in blocks to bound
    memory.
    """
    sigma = check_scalar(sigma, "sigma", lower=0, upper=1, lower_inclusive=False,
                         upper_inclusive=False)
    v = _values(y)
    t = y.grid.nodes
    h = y.grid.h
    n = t.size
    semi = 0.0
    for start in range(0, n, block):
        stop = min(n, start + block)
        diff = v[start:stop, None, :] - v[None, :, :]
        sq = np.sum(diff * diff, axis=2)
        dt = np.abs(t[start:stop, None] - t[None, :])
        idx = np.arange(start, stop)
        dt[idx - start, idx] = 1.0
        sq[idx - start, idx] = 0.0
        semi += float(np.sum(sq / dt ** (1.0 + 2.0 * sigma)))
    return float(np.sqrt(norm_l2(y) ** 2 + h * h * semi))


# -- serialization -----------------------------------------------------------

def write_trajectory_csv(y, path):
    header = ["t"] + [f"y_{i}" for i in range(y.d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for tk, row in zip(y.grid.nodes, y.values):
            w.writerow([repr(float(tk))] + [repr(float(x)) for x in row])


def read_trajectory_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not header or header[0] != "t":
        raise InputError(f"{path}: first column must be 't'")
    data = np.array([[float(x) for x in r] for r in body])
    t = data[:, 0]
    grid = TimeGrid(float(t[-1]), len(t) - 1)
    if not np.allclose(t, grid.nodes, rtol=0, atol=1e-12 * max(1.0, grid.T)):
        raise InputError(f"{path}: nodes are not a uniform grid")
    return Trajectory(grid, data[:, 1:])


def control_to_record(u):
    rec = u.family.describe()
    return {"family": rec, "params": u.params.tolist()}


def control_from_record(rec):
    fam = rec["family"]
    if fam["kind"] == "example_exp":
        family = ControlFamily.example_exp()
    else:
        family = ControlFamily(fam["kind"], fam["basis"], fam["lower"], fam["upper"],
                               d=fam.get("d", 1))
    return ControlPoint(family, rec["params"])
