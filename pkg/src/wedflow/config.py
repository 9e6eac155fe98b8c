"""Run configuration: YAML text in, validated dataclasses out.

A config has six sections; missing sections take their defaults::

    problem:  {energy: {type: quadratic, Q: [[1.0]]}, y0: [1.0], T: 1.0, N: 2000}
    control:  {kind: example_exp}
    target:   {w_y: 1.0, y_ref: "exp(-t)", w_u: "t**2", u_ref: "exp(-t)"}
    solver:   {tol: 1.0e-10, lattice: 11, threads: 1}
    run:      {epsilon: 0.2, lambda: 1.0e-5, u: [0.5], ...}
    output:   {dir: out}
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import yaml

from .core import ControlFamily, TimeGrid
from .energy import energy_from_config
from .exceptions import ConfigError, WedflowError
from .optctl import SolverOptions, TargetFunctional
from .problems import ProblemBundle
from .wed import MAX_EXPONENT, epsilon0


@dataclass
class ProblemSection:
    energy: dict = field(default_factory=lambda: {"type": "quadratic", "Q": [[1.0]]})
    y0: list = field(default_factory=lambda: [1.0])
    T: float = 1.0
    N: int = 2000


@dataclass
class ControlSection:
    kind: str = "example_exp"
    basis: list = None
    lower: list = None
    upper: list = None


@dataclass
class TargetSection:
    w_f: float = 0.0
    y_T: list = None
    w_y: object = 0.0
    y_ref: object = 0.0
    w_u: object = 0.0
    u_ref: object = 0.0


@dataclass
class SolverSection:
    tol: float = 1e-10
    max_iter: int = None
    lattice: int = 11
    threads: int = 1
    nm_maxfev: int = 400


@dataclass
class RunSection:
    epsilon: float = None
    lam: float = None
    u: list = None
    epsilons: list = None
    lambdas: list = None
    schedule: object = "default"
    sigma: float = 0.5
    u_hat: list = None


@dataclass
class OutputSection:
    dir: str = "."


# YAML key -> dataclass attribute, where they differ
_ALIASES = {"run": {"lambda": "lam"}}

_SECTIONS = {"problem": ProblemSection, "control": ControlSection, "target": TargetSection,
             "solver": SolverSection, "run": RunSection, "output": OutputSection}


@dataclass
class RunConfig:
    problem: ProblemSection = field(default_factory=ProblemSection)
    control: ControlSection = field(default_factory=ControlSection)
    target: TargetSection = field(default_factory=TargetSection)
    solver: SolverSection = field(default_factory=SolverSection)
    run: RunSection = field(default_factory=RunSection)
    output: OutputSection = field(default_factory=OutputSection)

    def to_dict(self):
        out = {}
        for name in _SECTIONS:
            sec = asdict(getattr(self, name))
            back = {v: k for k, v in _ALIASES.get(name, {}).items()}
            out[name] = {back.get(k, k): v for k, v in sec.items()}
        return out

    def to_text(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def hash(self):
        """sha256 of the canonical JSON form; output directory excluded."""
        d = self.to_dict()
        d.pop("output")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    # -- builders -------------------------------------------------------------

    def bundle(self):
        p = self.problem
        energy = energy_from_config(p.energy)
        c = self.control
        if c.kind == "example_exp":
            family = ControlFamily.example_exp()
        else:
            family = ControlFamily.basis_box(c.basis, c.lower, c.upper, d=len(p.y0))
        t = self.target
        target = TargetFunctional(d=len(p.y0), w_f=t.w_f, y_T=t.y_T, w_y=t.w_y, y_ref=t.y_ref,
                                  w_u=t.w_u, u_ref=t.u_ref)
        return ProblemBundle(energy, p.y0, TimeGrid(p.T, p.N), family, target)

    def options(self, threads=None, tol=None):
        s = self.solver
        return SolverOptions(lattice=s.lattice, tol=s.tol if tol is None else tol,
                             max_iter=s.max_iter,
                             threads=s.threads if threads is None else threads,
                             nm_maxfev=s.nm_maxfev)


def _build_section(name, raw):
    cls = _SECTIONS[name]
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    alias = _ALIASES.get(name, {})
    back = {v: k for k, v in alias.items()}
    valid = [back.get(f.name, f.name) for f in fields(cls)]
    kwargs = {}
    for key, value in raw.items():
        if key not in valid:
            raise ConfigError(f"unknown field '{name}.{key}'; valid fields: {', '.join(valid)}")
        kwargs[alias.get(key, key)] = value
    return cls(**kwargs)


def _positive(x, name):
    try:
        v = float(x)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {x!r}") from None
    if not v > 0:
        raise ConfigError(f"{name} must be positive")
    return v


def _validate(cfg):
    p = cfg.problem
    _positive(p.T, "problem.T")
    if not isinstance(p.N, int) or isinstance(p.N, bool) or p.N < 2:
        raise ConfigError("problem.N must be an integer >= 2")
    if not isinstance(p.y0, list) or not p.y0:
        raise ConfigError("problem.y0 must be a non-empty list")
    if cfg.control.kind not in ControlFamily.KINDS:
        raise ConfigError(f"control.kind must be one of {', '.join(ControlFamily.KINDS)}")
    if cfg.control.kind == "basis_box" and any(
            v is None for v in (cfg.control.basis, cfg.control.lower, cfg.control.upper)):
        raise ConfigError("control.kind basis_box needs basis, lower and upper")
    s = cfg.solver
    _positive(s.tol, "solver.tol")
    if not isinstance(s.lattice, int) or s.lattice < 2:
        raise ConfigError("solver.lattice must be an integer >= 2")
    if not isinstance(s.threads, int) or s.threads < 1:
        raise ConfigError("solver.threads must be an integer >= 1")
    r = cfg.run
    try:
        kappa = energy_from_config(p.energy).kappa
    except WedflowError as exc:
        raise ConfigError(f"problem.energy: {exc}") from None
    eps_values = ([r.epsilon] if r.epsilon is not None else []) + list(r.epsilons or [])
    for e in eps_values:
        e = _positive(e, "epsilon")
        if kappa < 0 and e >= epsilon0(kappa):
            raise ConfigError(f"epsilon={e} violates the convexity guard epsilon < "
                              f"1/(4|kappa|) = {epsilon0(kappa)}")
        if p.T / e > MAX_EXPONENT:
            raise ConfigError(f"epsilon={e} violates the underflow guard T/epsilon <= "
                              f"{MAX_EXPONENT}")
    if r.lam is not None:
        _positive(r.lam, "lambda")
    for e in r.lambdas or []:
        _positive(e, "lambda")
    if not (isinstance(r.schedule, str) and r.schedule == "default"):
        if not isinstance(r.schedule, (int, float)) or isinstance(r.schedule, bool):
            raise ConfigError("run.schedule must be 'default' or a constant lambda")
        _positive(r.schedule, "run.schedule")
    if not 0 < float(r.sigma) < 1:
        raise ConfigError("run.sigma must lie in (0, 1)")


def parse_config(text):
    """Parse and validate YAML config text into a :class:`RunConfig`."""
    try:
        raw = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config text: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping of sections")
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section '{sorted(unknown)[0]}'; valid sections: "
                          f"{', '.join(_SECTIONS)}")
    cfg = RunConfig(**{name: _build_section(name, raw.get(name)) for name in _SECTIONS})
    _validate(cfg)
    try:
        cfg.bundle()
    except WedflowError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
