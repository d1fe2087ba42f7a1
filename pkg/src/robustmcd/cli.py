"""Command-line entry point.

Exit codes: 0 success, 1 bad input or usage, 2 degenerate data, 3 failed
certificate on an exact fit, 4 failed checks in ``verify`` or an experiment.
"""

import argparse
import os
import sys

import numpy as np

from . import distributions as dist
from ._io import atomic_write, dumps
from .asymptotics import clt_covariance, influence, solve_theta0
from .estimator import cstep_mcd, exact_mcd
from .experiments import (
    ExperimentConfig,
    run_clt,
    run_consistency,
    run_contamination,
    run_influence,
    run_von_mises,
)
from .functional import exact_functional_mcd, functional_mcd
from .model import CsvFormatError, DegenerateDataError, WeightedMeasure, read_csv
from .verify import run_suite

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE, EXIT_CERTIFICATE, EXIT_CHECKS = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    # usage errors share the bad-input code so 2 stays reserved for degenerate data
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _gamma(text):
    g = float(text)
    if not 0 < g <= 1:
        raise argparse.ArgumentTypeError(f"gamma must lie in (0, 1], got {g}")
    return g


def _threads(args):
    if args.threads is not None:
        return args.threads
    return int(os.environ.get("MCD_THREADS", "1"))


def _emit(args, payload, report=None):
    if report is not None and args.output:
        report.write(args.output)
        return
    text = dumps(payload)
    if args.output:
        atomic_write(args.output, text)
    else:
        sys.stdout.write(text)


def _population(args):
    if args.population:
        with open(args.population) as fh:
            return dist.PopulationSpec.from_json(fh.read())
    fam, k = args.family, args.dim
    if fam == "gaussian":
        return dist.gaussian(k)
    if fam == "student_t":
        return dist.student_t(k, args.df)
    if fam == "uniform_ball":
        return dist.uniform_ball(k)
    raise ValueError(f"family {fam!r} needs a --population JSON file")


def _config(args, n_default, replicas_default):
    if getattr(args, "config", None):
        cfg = ExperimentConfig.from_json(args.config)
        cfg.threads = _threads(args)
        return cfg
    return ExperimentConfig(
        population=_population(args),
        gamma=args.gamma,
        n_grid=tuple(args.n or n_default),
        replicas=args.replicas or replicas_default,
        seed=args.seed,
        starts=args.starts,
        threads=_threads(args),
    )


def cmd_fit(args):
    data = read_csv(args.input)
    weighted = isinstance(data, WeightedMeasure)
    if args.method == "exact":
        fit = exact_functional_mcd(data, args.gamma) if weighted else exact_mcd(data, args.gamma)
    else:
        solver = functional_mcd if weighted else cstep_mcd
        fit = solver(data, args.gamma, starts=args.starts, seed=args.seed)
    config = {"input": args.input, "gamma": args.gamma, "method": args.method}
    if args.method == "cstep":
        config.update(starts=args.starts, seed=args.seed)
    _emit(args, {"config": config, "n": data.n, "k": data.k, **fit.to_dict()})
    if fit.degenerate:
        return EXIT_DEGENERATE
    if args.method == "exact" and not fit.certificate.ok:
        return EXIT_CERTIFICATE
    return EXIT_OK


def _theta_dict(th):
    return {
        "m": th.m.tolist(),
        "G": th.G.tolist(),
        "r": th.r,
        "sigma": th.sigma.tolist(),
        "cutoff": float(th.r * np.sqrt(np.linalg.eigvalsh(th.sigma)).max()),
        "vector": th.to_vector().tolist(),
    }


def cmd_theta0(args):
    from .asymptotics import lambda_map

    spec = _population(args)
    th = solve_theta0(spec, args.gamma)
    res = float(np.max(np.abs(lambda_map(th, spec, args.gamma))))
    config = {"population": spec.to_dict(), "gamma": args.gamma}
    _emit(args, {"config": config, "theta0": _theta_dict(th), "residual": res})
    return EXIT_OK


def cmd_clt(args):
    if args.replicas:
        cfg = _config(args, [5000], args.replicas)
        rep = run_clt(cfg)
        _emit(args, rep.to_dict(), rep)
        return EXIT_OK if rep.passed else EXIT_CHECKS
    spec = _population(args)
    report = clt_covariance(spec, args.gamma)
    _emit(args, {"config": {"population": spec.to_dict(), "gamma": args.gamma}, **report.to_dict()})
    return EXIT_OK


def cmd_influence(args):
    spec = _population(args)
    xs = [np.broadcast_to(np.asarray(x, float), (spec.dim,)) for x in args.x or [[0.0]]]
    report = clt_covariance(spec, args.gamma)
    if args.eps:
        cfg = ExperimentConfig(spec, args.gamma, seed=args.seed, threads=_threads(args))
        rep = run_influence(cfg, xs, args.eps, report=report)
        _emit(args, rep.to_dict(), rep)
        return EXIT_OK if rep.passed else EXIT_CHECKS
    values = [{"x": x.tolist(), "influence": influence(x, spec, args.gamma, report).tolist()} for x in xs]
    config = {"population": spec.to_dict(), "gamma": args.gamma}
    _emit(args, {"config": config, "theta0": _theta_dict(report.theta0), "values": values})
    return EXIT_OK


def cmd_contaminate(args):
    cfg = _config(args, [1], 1)
    eps = args.eps or [0.1, 0.05, 0.01]
    kwargs = {"eps": eps[0]}
    if len(eps) >= 3:
        kwargs["eps_grid"] = eps
    if args.shift:
        kwargs["shifts"] = args.shift
    rep = run_contamination(cfg, **kwargs)
    _emit(args, rep.to_dict(), rep)
    return EXIT_OK if rep.passed else EXIT_CHECKS


def cmd_consistency(args):
    rep = run_consistency(_config(args, [200, 800, 3200], 100))
    _emit(args, rep.to_dict(), rep)
    return EXIT_OK if rep.passed else EXIT_CHECKS


def cmd_vonmises(args):
    rep = run_von_mises(_config(args, [500, 2000, 8000], 200))
    _emit(args, rep.to_dict(), rep)
    return EXIT_OK if rep.passed else EXIT_CHECKS


def cmd_verify(args):
    results = run_suite(quick=args.quick)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name}: {r.trials} trials, {r.failures} failures {r.detail}", file=sys.stderr)
    ok = all(r.passed for r in results)
    _emit(args, {"quick": args.quick, "passed": ok, "checks": [r.to_dict() for r in results]})
    return EXIT_OK if ok else EXIT_CHECKS


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--gamma", type=_gamma, default=0.5, help="trimming level (default 0.5)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--output", help="write here instead of stdout (atomic)")
    common.add_argument("--threads", type=int, help="worker threads (fallback: MCD_THREADS)")

    pop = argparse.ArgumentParser(add_help=False)
    pop.add_argument("--family", default="gaussian", choices=dist.ELLIPTICAL)
    pop.add_argument("--dim", type=int, default=1)
    pop.add_argument("--df", type=float, default=5.0, help="degrees of freedom for student_t")
    pop.add_argument("--population", help="PopulationSpec JSON file (overrides --family/--dim)")

    mc = argparse.ArgumentParser(add_help=False)
    mc.add_argument("--n", type=_ints, help="comma-separated sample sizes")
    mc.add_argument("--replicas", type=int)
    mc.add_argument("--starts", type=int, default=50)
    mc.add_argument("--config", help="ExperimentConfig JSON file")

    parser = _Parser(prog="robustmcd", description="Minimum covariance determinant toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", parents=[common], help="fit a CSV sample")
    p.add_argument("--input", required=True)
    p.add_argument("--method", choices=("exact", "cstep"), default="cstep")
    p.add_argument("--starts", type=int, default=50)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("theta0", parents=[common, pop], help="population root")
    p.set_defaults(func=cmd_theta0)

    p = sub.add_parser("clt", parents=[common, pop, mc], help="asymptotic covariance (Monte Carlo with --replicas)")
    p.set_defaults(func=cmd_clt)

    p = sub.add_parser("influence", parents=[common, pop], help="influence function values")
    p.add_argument("--x", type=_floats, action="append", help="point, comma-separated; repeatable")
    p.add_argument("--eps", type=_floats, help="compare with perturbation quotients at these eps")
    p.set_defaults(func=cmd_influence)

    p = sub.add_parser("contaminate", parents=[common, pop, mc], help="point-mass contamination run")
    p.add_argument("--eps", type=_floats, help="first value for the shift run; 3+ values form the eps-grid")
    p.add_argument("--shift", type=_floats, help="comma-separated shift norms")
    p.set_defaults(func=cmd_contaminate)

    p = sub.add_parser("consistency", parents=[common, pop, mc], help="consistency experiment")
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("vonmises", parents=[common, pop, mc], help="linearization remainder experiment")
    p.set_defaults(func=cmd_vonmises)

    p = sub.add_parser("verify", parents=[common], help="run the self-check suite")
    p.add_argument("--quick", action="store_true")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DegenerateDataError as exc:
        print(f"error: degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (CsvFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def run():
    sys.exit(main())
