"""Command-line entry point ``wedflow``.

Every subcommand reads a YAML config (``--config`` or positional, default:
the bundled decay example), writes its CSV/JSON outputs atomically into
``--out`` and prints the JSON summary to stdout.

Exit codes: 0 success, 2 solver failure, 3 configuration or path error.
"""

import argparse
import json
import logging
import os
import sys
import tempfile
from importlib import resources

from . import oracle, sweep
from .config import load_config, parse_config
from .core import write_trajectory_csv
from .exceptions import ConfigError, OracleError, SolverError, WedflowError
from .flow import solve_gradient_flow
from .optctl import solve_P, solve_P_eps, solve_P_eps_lambda
from .wed import wed_minimize

log = logging.getLogger("wedflow")

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3

SUBCOMMANDS = ("gradient-flow", "wed-min", "solve-p", "solve-p-eps", "solve-p-eps-lambda",
               "sweep-eps", "sweep-lambda", "sweep-joint", "gamma-probe", "verify-oracle")

HELP = {
    "gradient-flow": "implicit Euler gradient flow for the control run.u",
    "wed-min": "WED minimizer for run.u at run.epsilon",
    "solve-p": "optimal control of the gradient flow",
    "solve-p-eps": "bilevel optimal control at run.epsilon",
    "solve-p-eps-lambda": "penalized optimal control at run.epsilon, run.lambda",
    "sweep-eps": "bilevel problem over run.epsilons",
    "sweep-lambda": "penalized problem over run.lambdas at run.epsilon",
    "sweep-joint": "penalized problem along the lambda schedule over run.epsilons",
    "gamma-probe": "recovery-sequence gap at run.u_hat over run.epsilons",
    "verify-oracle": "certify the closed-form example oracle",
}


def default_config_text():
    return resources.files("wedflow").joinpath("data/sec21.cfg").read_text()


# -- atomic output --------------------------------------------------------------

class Outputs:
    """Each file goes to a temp path first and is renamed into place only
    after every write of the run succeeded."""

    def __init__(self, directory):
        if not os.path.isdir(directory):
            raise ConfigError(f"output directory does not exist: {directory}")
        if not os.access(directory, os.W_OK):
            raise ConfigError(f"output directory is not writable: {directory}")
        self.dir = directory
        self._pending = []

    def _temp(self, name):
        fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=self.dir)
        os.close(fd)
        self._pending.append((tmp, os.path.join(self.dir, name)))
        return tmp

    def json(self, name, payload):
        with open(self._temp(name), "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")

    def trajectory(self, name, y):
        write_trajectory_csv(y, self._temp(name))

    def table(self, name, rows, columns):
        sweep.write_table_csv(rows, columns, self._temp(name))

    def commit(self):
        for tmp, final in self._pending:
            os.replace(tmp, final)
        self._pending = []

    def discard(self):
        for tmp, _ in self._pending:
            try:
                os.remove(tmp)
            except OSError:
                pass
        self._pending = []


def _jsonable(x):
    try:
        return float(x)
    except (TypeError, ValueError):
        return str(x)


# -- subcommands ----------------------------------------------------------------

def _need(value, field):
    if value is None:
        raise ConfigError(f"this subcommand needs run.{field} in the config")
    return value


def _control(cfg, bundle):
    try:
        return bundle.family.point(_need(cfg.run.u, "u"))
    except WedflowError as exc:
        raise ConfigError(f"run.u: {exc}") from None


def _report(rep):
    d = rep.to_dict()
    d.pop("wall_time", None)
    return d


def _pair_record(pair):
    rec = pair.to_record()
    rec.pop("wall_time", None)
    rec["report"] = _report(pair.report)
    return rec


def _plan(cfg, bundle, opts, threads):
    r = cfg.run
    if r.schedule == "default":
        schedule = sweep.default_schedule
    else:
        lam0 = float(r.schedule)

        def schedule(eps, T):
            return lam0
    lists = {k: v for k, v in (("epsilons", r.epsilons), ("lambdas", r.lambdas)) if v}
    try:
        return sweep.SweepPlan(bundle, schedule=schedule, sigma=r.sigma, u_hat=r.u_hat,
                               options=opts, threads=threads, **lists)
    except WedflowError as exc:
        raise ConfigError(str(exc)) from None


def run(subcommand, cfg, out_dir, threads=None, tol=None):
    """Execute ``subcommand`` for ``cfg``; returns the JSON summary."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    outputs = Outputs(out_dir)
    opts = cfg.options(threads=threads, tol=tol)
    summary = {"subcommand": subcommand, "config_hash": cfg.hash()}
    stem = subcommand.replace("-", "_")
    try:
        _dispatch(subcommand, cfg, opts, outputs, summary, stem)
        outputs.json(f"{stem}.json", summary)
        outputs.commit()
    except BaseException:
        outputs.discard()
        raise
    return summary


def _dispatch(sub, cfg, opts, outputs, summary, stem):
    if sub == "verify-oracle":
        rows = oracle.verify_oracle()
        failed = [r for r in rows if r["passed"] is False]
        outputs.table(f"{stem}.csv", rows, ["check", "epsilon", "u0", "value", "passed"])
        summary.update(checks=len(rows), failed=len(failed),
                       informational=sum(r["passed"] is None for r in rows),
                       passed=not failed)
        if failed:
            raise OracleError(f"{len(failed)} oracle certificates failed")
        return

    bundle = cfg.bundle()
    r = cfg.run
    if sub == "gradient-flow":
        y, rep = solve_gradient_flow(bundle.flow(), _control(cfg, bundle))
        outputs.trajectory(f"{stem}.csv", y)
        summary.update(report=_report(rep))
    elif sub == "wed-min":
        wed = bundle.wed(_need(r.epsilon, "epsilon"))
        y, rep = wed_minimize(wed, _control(cfg, bundle), tol=opts.tol, max_iter=opts.max_iter)
        outputs.trajectory(f"{stem}.csv", y)
        summary.update(epsilon=r.epsilon, report=_report(rep))
    elif sub in ("solve-p", "solve-p-eps", "solve-p-eps-lambda"):
        if sub == "solve-p":
            pair = solve_P(bundle.target, bundle.flow(), bundle.family, opts)
        elif sub == "solve-p-eps":
            pair = solve_P_eps(bundle.target, bundle.wed(_need(r.epsilon, "epsilon")),
                               bundle.family, opts)
            summary["epsilon"] = r.epsilon
        else:
            pair = solve_P_eps_lambda(bundle.target, bundle.wed(_need(r.epsilon, "epsilon")),
                                      bundle.family, _need(r.lam, "lambda"), opts)
            summary.update(epsilon=r.epsilon, **{"lambda": r.lam})
        outputs.trajectory(f"{stem}_state.csv", pair.y)
        summary.update(_pair_record(pair))
    else:
        _dispatch_sweep(sub, cfg, bundle, opts, outputs, summary, stem)


def _dispatch_sweep(sub, cfg, bundle, opts, outputs, summary, stem):
    plan = _plan(cfg, bundle, opts, opts.threads)
    r = cfg.run
    if sub == "sweep-eps":
        _need(r.epsilons, "epsilons")
        rows, cols = sweep.sweep_eps(plan), sweep.EPS_COLUMNS
        res = sweep.summarize("sweep-eps", rows, sweep.limit_solution(plan))
    elif sub == "sweep-lambda":
        _need(r.lambdas, "lambdas")
        eps = _need(r.epsilon, "epsilon")
        rows, cols = sweep.sweep_lambda(plan, eps), sweep.LAMBDA_COLUMNS
        res = sweep.summarize("sweep-lambda", rows)
        summary["epsilon"] = eps
    elif sub == "sweep-joint":
        _need(r.epsilons, "epsilons")
        q, ok = plan.check_schedule()
        rows, cols = sweep.sweep_joint(plan), sweep.JOINT_COLUMNS
        res = sweep.summarize("sweep-joint", rows, sweep.limit_solution(plan))
        res["assertions"]["schedule_decay"] = ok
        res["passed"] = res["passed"] and ok
        summary["schedule_quantity"] = q
    else:
        _need(r.u_hat, "u_hat")
        rows, cols = sweep.gamma_liminf_probe(plan), sweep.GAMMA_COLUMNS
        res = sweep.summarize("gamma-probe", rows)
    outputs.table(f"{stem}.csv", rows, cols)
    summary.update(res)


# -- entry point ----------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="wedflow", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=HELP[name], description=HELP[name])
        sp.add_argument("config_path", nargs="?", help="config file (same as --config)")
        sp.add_argument("--config", dest="config", help="YAML config file")
        sp.add_argument("--out", help="output directory (default: config output.dir)")
        sp.add_argument("--threads", type=int, help="worker threads for lattices and sweeps")
        sp.add_argument("--tol", type=float, help="inner solver tolerance")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def _threads(arg):
    env = os.environ.get("WEDFLOW_THREADS")
    if env is not None:
        try:
            val = int(env)
        except ValueError:
            raise ConfigError(f"WEDFLOW_THREADS must be an integer, got {env!r}") from None
    else:
        val = arg
    if val is not None and val < 1:
        raise ConfigError("thread count must be >= 1")
    return val


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config and args.config_path and args.config != args.config_path:
            raise ConfigError("give the config either positionally or with --config, not both")
        path = args.config or args.config_path
        cfg = load_config(path) if path else parse_config(default_config_text())
        if args.tol is not None and not args.tol > 0:
            raise ConfigError("--tol must be positive")
        out = args.out if args.out is not None else cfg.output.dir
        summary = run(args.subcommand, cfg, out, threads=_threads(args.threads), tol=args.tol)
    except (SolverError, OracleError) as exc:
        print(f"wedflow: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (WedflowError, OSError) as exc:
        print(f"wedflow: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    json.dump(summary, sys.stdout, indent=2, sort_keys=True, default=_jsonable)
    sys.stdout.write("\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
