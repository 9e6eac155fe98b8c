"""scikit-learn style wrappers around the solvers.

The control problems have no training data, so ``fit`` ignores ``X``/``y``
and solves the configured problem; ``predict(u)`` maps a control to the
nodal state values of the relevant state map. Hyperparameters follow the
sklearn convention (stored verbatim in ``__init__``), so ``get_params``,
``set_params`` and ``sklearn.base.clone`` work.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import ControlFamily, ControlPoint, TimeGrid, Trajectory
from .energy import Energy, energy_from_config
from .exceptions import InputError
from .flow import FlowProblem, solve_gradient_flow
from .optctl import (SolverOptions, TargetFunctional, eval_J, solve_P, solve_P_eps,
                     solve_P_eps_lambda)
from .wed import WedProblem, wed_minimize, wed_value


def _energy(e):
    if isinstance(e, Energy):
        return e
    if isinstance(e, dict):
        return energy_from_config(e)
    raise InputError("energy must be an Energy instance or a config mapping")


class _StateMapMixin:
    """Common plumbing: grid, energy, control coercion."""

    def _grid(self):
        return TimeGrid(self.T, self.N)

    def _control(self, u, grid):
        if isinstance(u, (ControlPoint, Trajectory)):
            return u
        if callable(u):
            return Trajectory.from_function(grid, u)
        arr = np.asarray(u, dtype=float)
        if arr.ndim == 1 and arr.shape[0] != grid.N + 1 and hasattr(self, "family_"):
            return self.family_.point(arr)
        return Trajectory(grid, arr.reshape(grid.N + 1, -1))


class WedMinimizer(_StateMapMixin, BaseEstimator):
    """Minimizer of the WED functional for a fixed control.

    ``fit(u)`` computes ``y_eps^u``; ``predict(u)`` returns the nodal
    values of the minimizer for another control (cached per control).
    """

    def __init__(self, energy=None, y0=(1.0,), T=1.0, N=200, epsilon=0.2, tol=1e-10,
                 max_iter=None):
        self.energy = energy
        self.y0 = y0
        self.T = T
        self.N = N
        self.epsilon = epsilon
        self.tol = tol
        self.max_iter = max_iter

    def _problem(self):
        e = _energy(self.energy if self.energy is not None else {"type": "quadratic", "Q": [[1.0]]})
        return WedProblem(e, list(self.y0), self._grid(), self.epsilon)

    def fit(self, X, y=None):
        self.problem_ = self._problem()
        u = self._control(X, self.problem_.grid)
        self.y_, self.report_ = wed_minimize(self.problem_, u, tol=self.tol, max_iter=self.max_iter)
        self.value_ = wed_value(self.problem_, self.y_, u)
        return self

    def predict(self, X):
        check_is_fitted(self, "y_")
        u = self._control(X, self.problem_.grid)
        y, _ = wed_minimize(self.problem_, u, tol=self.tol, max_iter=self.max_iter)
        return y.values.copy()


class _ControlEstimator(_StateMapMixin, BaseEstimator):
    """Shared fit/predict for the three control problems."""

    def _setup(self):
        self.energy_ = _energy(self.energy if self.energy is not None
                               else {"type": "quadratic", "Q": [[1.0]]})
        self.family_ = self.family if self.family is not None else ControlFamily.example_exp()
        if self.target is None:
            raise InputError("target functional is required")
        self.target_ = (self.target if isinstance(self.target, TargetFunctional)
                        else TargetFunctional(d=len(self.y0), **self.target))
        self.grid_ = self._grid()
        self.options_ = SolverOptions(lattice=self.lattice, tol=self.tol, threads=self.threads)

    def _store(self, pair):
        self.u_ = pair.u
        self.y_ = pair.y
        self.value_ = pair.value
        self.report_ = pair.report
        self.pair_ = pair
        return self

    def objective(self, X):
        """Target functional along the state map at control ``X``."""
        check_is_fitted(self, "u_")
        u = self._control(X, self.grid_)
        return eval_J(self.target_, Trajectory(self.grid_, self.predict(u)), u)


class GradientFlowControl(_ControlEstimator):
    """Optimal control of the discrete gradient flow."""

    def __init__(self, energy=None, y0=(1.0,), T=1.0, N=2000, family=None, target=None,
                 lattice=11, tol=1e-10, threads=1):
        self.energy = energy
        self.y0 = y0
        self.T = T
        self.N = N
        self.family = family
        self.target = target
        self.lattice = lattice
        self.tol = tol
        self.threads = threads

    def fit(self, X=None, y=None):
        self._setup()
        self.flow_ = FlowProblem(self.energy_, list(self.y0), self.grid_)
        return self._store(solve_P(self.target_, self.flow_, self.family_, self.options_))

    def predict(self, X):
        check_is_fitted(self, "u_")
        y, _ = solve_gradient_flow(self.flow_, self._control(X, self.grid_))
        return y.values.copy()


class BilevelWedControl(_ControlEstimator):
    """Optimal control with the state constrained to the WED minimizer."""

    def __init__(self, energy=None, y0=(1.0,), T=1.0, N=2000, family=None, target=None,
                 epsilon=0.2, lattice=11, tol=1e-10, threads=1):
        self.energy = energy
        self.y0 = y0
        self.T = T
        self.N = N
        self.family = family
        self.target = target
        self.epsilon = epsilon
        self.lattice = lattice
        self.tol = tol
        self.threads = threads

    def fit(self, X=None, y=None):
        self._setup()
        self.wed_ = WedProblem(self.energy_, list(self.y0), self.grid_, self.epsilon)
        return self._store(solve_P_eps(self.target_, self.wed_, self.family_, self.options_))

    def predict(self, X):
        check_is_fitted(self, "u_")
        y, _ = wed_minimize(self.wed_, self._control(X, self.grid_), tol=self.tol)
        return y.values.copy()


class PenalizedWedControl(BilevelWedControl):
    """Penalized relaxation ``J + (W - M)/lam`` of the bilevel problem.

    ``predict`` returns the WED minimizer (the state the penalty pulls
    toward); the penalized optimal state itself is ``y_``.
    """

    def __init__(self, energy=None, y0=(1.0,), T=1.0, N=2000, family=None, target=None,
                 epsilon=0.2, lam=1e-4, lattice=11, tol=1e-10, threads=1):
        super().__init__(energy=energy, y0=y0, T=T, N=N, family=family, target=target,
                         epsilon=epsilon, lattice=lattice, tol=tol, threads=threads)
        self.lam = lam

    def fit(self, X=None, y=None):
        self._setup()
        self.wed_ = WedProblem(self.energy_, list(self.y0), self.grid_, self.epsilon)
        return self._store(solve_P_eps_lambda(self.target_, self.wed_, self.family_, self.lam,
                                              self.options_))
