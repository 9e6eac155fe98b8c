"""Ready-made problem bundles."""

from dataclasses import dataclass

from .core import ControlFamily, TimeGrid
from .energy import Quadratic
from .flow import FlowProblem
from .optctl import TargetFunctional
from .wed import WedProblem


@dataclass
class ProblemBundle:
    energy: object
    y0: object
    grid: TimeGrid
    family: ControlFamily
    target: TargetFunctional

    def flow(self):
        return FlowProblem(self.energy, self.y0, self.grid)

    def wed(self, epsilon):
        return WedProblem(self.energy, self.y0, self.grid, epsilon)

    def with_grid(self, N):
        return ProblemBundle(self.energy, self.y0, TimeGrid(self.grid.T, N), self.family,
                             self.target)


def decay_example(N=2000):
    """Scalar decay ``y' + y = u0 e^{-t}``, ``y(0) = 1`` on ``[0, 1]``.

    Tracks ``e^{-t}`` in the state and, with weight ``t^2``, in the control.
    The optimum of the unregularized problem is ``u0 = 1/2``.
    """
    return ProblemBundle(
        energy=Quadratic([[1.0]]),
        y0=[1.0],
        grid=TimeGrid(1.0, N),
        family=ControlFamily.example_exp(),
        target=TargetFunctional(d=1, w_y=1.0, y_ref="exp(-t)", w_u="t**2", u_ref="exp(-t)"),
    )
