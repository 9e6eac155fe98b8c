"""Kappa-convex energies exposed through value, proximal map and derivatives.

Every energy ``phi`` satisfies ``phi - (kappa/2)|.|^2`` convex. The
subdifferential is never represented as a set: inclusions
``eta in d phi(w)`` are realized by the proximal residual
``eta = (z - w)/gamma`` with ``w = prox_{gamma phi}(z)``.
"""

import numpy as np

from .exceptions import CapabilityError, ConfigError, DomainError, ParameterError, SolverError
from .validation import check_state

PROX_GUARD = 1e-8

__all__ = [
    "Energy", "Quadratic", "DoubleWell", "Obstacle", "energy_from_config",
    "phi_value", "prox_phi", "phi_grad", "phi_hess", "minimal_section",
]


class Energy:
    """Base class. Subclasses set ``kappa`` and ``smooth``."""

    kappa = 0.0
    smooth = True

    # --- single-state API ---------------------------------------------------
    def value(self, v):
        return float(self.values(np.atleast_2d(check_state(v)))[0])

    def prox(self, z, gamma):
        z = check_state(z)
        self._check_gamma(gamma)
        return self.prox_nodes(z[None, :], gamma)[0]

    def grad(self, v):
        self._require_smooth("gradient")
        return self.grad_nodes(check_state(v)[None, :])[0]

    def hess(self, v):
        self._require_smooth("Hessian")
        return self.hess_nodes(check_state(v)[None, :])[0]

    def minimal_section(self, v):
        v = check_state(v)
        return self.grad(v)

    # --- batched API: rows are states --------------------------------------
    def values(self, Y):
        raise NotImplementedError

    def prox_nodes(self, Z, gamma):
        raise NotImplementedError

    def grad_nodes(self, Y):
        raise CapabilityError(f"{type(self).__name__} has no gradient")

    def hess_nodes(self, Y):
        raise CapabilityError(f"{type(self).__name__} has no Hessian")

    def in_domain(self, Y):
        """Boolean per row: is the state in the effective domain."""
        return np.ones(np.atleast_2d(Y).shape[0], dtype=bool)

    def project_domain(self, Y):
        return np.array(Y, dtype=float)

    # --- helpers ------------------------------------------------------------
    def _check_gamma(self, gamma):
        if not np.isfinite(gamma) or gamma <= 0:
            raise ParameterError(f"prox step gamma must be positive, got {gamma}")
        if 1.0 + gamma * self.kappa <= PROX_GUARD:
            raise ParameterError(
                f"prox step gamma={gamma} violates 1 + gamma*kappa > {PROX_GUARD} "
                f"(kappa={self.kappa})")

    def _require_smooth(self, what):
        if not self.smooth:
            raise CapabilityError(f"{type(self).__name__} is prox-only; no {what} available")

    def config(self):
        raise NotImplementedError


class Quadratic(Energy):
    """``phi(y) = 1/2 y.Qy`` with ``Q`` symmetric positive definite."""

    smooth = True

    def __init__(self, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[0] != Q.shape[1] or not np.all(np.isfinite(Q)):
            raise ParameterError("Q must be a finite square matrix")
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
            raise ParameterError("Q must be symmetric")
        eig = np.linalg.eigvalsh(Q)
        if eig[0] <= 0:
            raise ParameterError(f"Q must be positive definite (smallest eigenvalue {eig[0]})")
        self.Q = Q
        self.kappa = float(eig[0])
        self._resolvents = {}

    @property
    def d(self):
        return self.Q.shape[0]

    def values(self, Y):
        Y = np.atleast_2d(Y)
        return 0.5 * np.einsum("ij,jk,ik->i", Y, self.Q, Y)

    def _resolvent(self, gamma):
        R = self._resolvents.get(gamma)
        if R is None:
            R = np.linalg.inv(np.eye(self.d) + gamma * self.Q)
            self._resolvents[gamma] = R
        return R

    def prox_nodes(self, Z, gamma):
        self._check_gamma(gamma)
        Z = np.atleast_2d(Z)
        if self.d == 1:
            return Z / (1.0 + gamma * self.Q[0, 0])
        return Z @ self._resolvent(gamma).T

    def grad_nodes(self, Y):
        return np.atleast_2d(Y) @ self.Q.T

    def hess_nodes(self, Y):
        n = np.atleast_2d(Y).shape[0]
        return np.broadcast_to(self.Q, (n,) + self.Q.shape)

    def config(self):
        return {"type": "quadratic", "Q": self.Q.tolist()}


def _cubic_resolvent(Z, gamma, maxiter=100):
    # solve gamma w^3 + (1 - gamma) w - z = 0 componentwise; strictly increasing
    Z = np.asarray(Z, dtype=float)
    a = 1.0 - gamma
    bound = np.abs(Z) / a + 1e-300
    lo, hi = -bound, bound.copy()
    w = Z / a if gamma < 0.5 else np.cbrt(Z / gamma)
    w = np.clip(w, lo, hi)
    for _ in range(maxiter):
        f = gamma * w ** 3 + a * w - Z
        lo = np.where(f < 0, w, lo)
        hi = np.where(f > 0, w, hi)
        fp = 3.0 * gamma * w * w + a
        step = f / fp
        w_new = w - step
        outside = (w_new <= lo) | (w_new >= hi)
        w_new = np.where(outside, 0.5 * (lo + hi), w_new)
        if np.all(np.abs(w_new - w) <= 1e-15 * (1.0 + np.abs(w_new))):
            return w_new
        w = w_new
    f = gamma * w ** 3 + a * w - Z
    if np.any(np.abs(f) > 1e-10 * (1.0 + np.abs(Z))):
        raise SolverError("double-well resolvent cubic did not converge", best=w)
    return w


class DoubleWell(Energy):
    """Componentwise double well ``phi(y) = sum_i (y_i^2 - 1)^2 / 4``."""

    kappa = -1.0
    smooth = True

    def values(self, Y):
        Y = np.atleast_2d(Y)
        return 0.25 * np.sum((Y * Y - 1.0) ** 2, axis=1)

    def prox_nodes(self, Z, gamma):
        self._check_gamma(gamma)
        return _cubic_resolvent(np.atleast_2d(Z), float(gamma))

    def grad_nodes(self, Y):
        Y = np.atleast_2d(Y)
        return Y ** 3 - Y

    def hess_nodes(self, Y):
        Y = np.atleast_2d(Y)
        n, d = Y.shape
        H = np.zeros((n, d, d))
        idx = np.arange(d)
        H[:, idx, idx] = 3.0 * Y * Y - 1.0
        return H

    def config(self):
        return {"type": "double_well"}


class Obstacle(Energy):
    """``phi(y) = |y|^2/2`` restricted to the box ``[a, b]^d`` (+inf outside)."""

    kappa = 1.0
    smooth = False

    def __init__(self, a=0.0, b=1.0):
        a, b = float(a), float(b)
        if not (np.isfinite(a) and np.isfinite(b)) or a > b:
            raise ParameterError(f"obstacle box needs finite a <= b, got [{a}, {b}]")
        self.a, self.b = a, b

    def in_domain(self, Y):
        Y = np.atleast_2d(Y)
        return np.all((Y >= self.a) & (Y <= self.b), axis=1)

    def project_domain(self, Y):
        return np.clip(Y, self.a, self.b)

    def values(self, Y):
        Y = np.atleast_2d(Y)
        out = 0.5 * np.sum(Y * Y, axis=1)
        return np.where(self.in_domain(Y), out, np.inf)

    def prox_nodes(self, Z, gamma):
        self._check_gamma(gamma)
        return np.clip(np.atleast_2d(Z) / (1.0 + gamma), self.a, self.b)

    def minimal_section(self, v):
        v = check_state(v)
        if not self.in_domain(v)[0]:
            raise DomainError(f"{v.tolist()} lies outside the obstacle box [{self.a}, {self.b}]")
        out = v.copy()
        # normal cone of the box adds [0, inf) at b and (-inf, 0] at a
        at_b = v >= self.b
        at_a = v <= self.a
        out[at_b & (v < 0)] = 0.0
        out[at_a & (v > 0)] = 0.0
        return out

    def config(self):
        return {"type": "obstacle", "a": self.a, "b": self.b}


def energy_from_config(cfg):
    """Build an energy from ``{"type": ..., ...}``."""
    if not isinstance(cfg, dict) or "type" not in cfg:
        raise ConfigError("energy must be a mapping with a 'type' field")
    kind = cfg["type"]
    fields = set(cfg) - {"type"}
    if kind == "quadratic":
        if fields != {"Q"}:
            raise ConfigError("energy 'quadratic' takes exactly the field Q")
        return Quadratic(cfg["Q"])
    if kind == "double_well":
        if fields:
            raise ConfigError(f"energy 'double_well' takes no fields, got {sorted(fields)}")
        return DoubleWell()
    if kind == "obstacle":
        if not fields <= {"a", "b"}:
            raise ConfigError(f"energy 'obstacle' accepts fields a, b; got {sorted(fields)}")
        return Obstacle(cfg.get("a", 0.0), cfg.get("b", 1.0))
    raise ConfigError(f"unknown energy type {kind!r}; valid: quadratic, double_well, obstacle")


def phi_value(E, v):
    return E.value(v)


def prox_phi(E, z, gamma):
    return E.prox(z, gamma)


def phi_grad(E, v):
    return E.grad(v)


def phi_hess(E, v):
    return E.hess(v)


def minimal_section(E, v):
    return E.minimal_section(v)
