"""Command line interface: ``stormc {run,plan,gradcheck,bench,verify}``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 verification failure. The output directory is taken from ``--out``,
then the ``STORMC_OUT`` environment variable, then the config.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .. import diagnostics, planner
from ..exceptions import BoundViolationError, ConfigError, NumericalFailure, StormError
from ..optimizer import run_scgd, run_storm_c
from . import config as cfg
from . import metrics, verify

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VERIFY = 0, 1, 2, 3
ENV_OUT = "STORMC_OUT"
DEFAULT_OUT = "stormc_out"

log = logging.getLogger("stormc")


def _out_dir(args, conf=None):
    if getattr(args, "out", None):
        return args.out
    if os.environ.get(ENV_OUT):
        return os.environ[ENV_OUT]
    if conf is not None and conf.output_dir:
        base = os.path.dirname(os.path.abspath(conf.source)) if conf.source else ""
        return os.path.join(base, conf.output_dir)
    return DEFAULT_OUT


def _seeds(args, conf):
    return [args.seed] if getattr(args, "seed", None) is not None else list(conf.seeds)


def _prepare(conf):
    base = os.path.dirname(os.path.abspath(conf.source)) if conf.source else None
    problem = cfg.build_problem(conf.problem, base_dir=base)
    x0 = problem.default_x0()
    plan, constants = cfg.build_plan(conf.plan, problem, x0)
    return problem, x0, plan, constants


def _execute(conf, problem, x0, plan, constants, algo, seed, out, include_ifo):
    """One run; writes its CSV (also on numerical failure) and returns the record."""
    path = os.path.join(out, metrics.run_filename(algo, problem.name, seed))
    log.info("running %s on %s with seed %d", algo, problem.name, seed)
    rng = np.random.default_rng(seed)
    try:
        if algo == "storm-c":
            record = run_storm_c(problem, plan.hyper, rng, output_rule=conf.output_rule,
                                 cadence=conf.cadence, x0=x0, seed=seed)
        else:
            record = run_scgd(problem, cfg.build_scgd(conf.scgd, plan.hyper), rng,
                              cadence=conf.cadence, x0=x0, seed=seed)
    except NumericalFailure as exc:
        if exc.record is not None:
            metrics.write_record(exc.record, path, include_ifo)
        raise
    metrics.write_record(record, path, include_ifo)
    if conf.runtime_assertions and algo == "storm-c":
        bad = diagnostics.assert_runtime_bounds(record, plan.hyper, constants)
        if bad:
            v = bad[0]
            raise BoundViolationError(
                f"runtime bound {v.check} violated at t={v.iteration}: {v.value} vs {v.bound}",
                bad)
    return record, path


def cmd_run(args):
    conf = cfg.load_config(args.config)
    include = args.include_diagnostics_ifo or conf.include_ifo
    problem, x0, plan, constants = _prepare(conf)
    out = _out_dir(args, conf)
    for algo in conf.algorithms:
        for seed in _seeds(args, conf):
            record, path = _execute(conf, problem, x0, plan, constants, algo, seed, out, include)
            print(f"{algo} seed={seed} iters={record.n_iter} ifo={record.ifo[-1]} -> {path}")
    return EXIT_OK


def cmd_bench(args):
    conf = cfg.load_config(args.config)
    include = args.include_diagnostics_ifo or conf.include_ifo
    problem, x0, plan, constants = _prepare(conf)
    out = _out_dir(args, conf)
    records = []
    for algo in conf.algorithms:
        for seed in _seeds(args, conf):
            records.append(_execute(conf, problem, x0, plan, constants, algo, seed, out,
                                    include)[0])
    rows = metrics.aggregate(records, include)
    path = metrics.write_aggregate(rows, os.path.join(out, f"bench_{problem.name}.csv"))
    final = {}
    for row in rows:
        final[row[0]] = row
    for algo, row in sorted(final.items()):
        print(f"{algo}: ifo={row[1]} median obj_gap={row[4]:.6g} median grad_norm={row[7]:.6g}")
    print(f"aggregate -> {path}")
    return EXIT_OK


def _parse_constants(text):
    values = {}
    for item in text.split(","):
        if not item.strip():
            continue
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"constant {item!r} is not KEY=VALUE", key="constants")
        try:
            values[key.strip()] = float(val)
        except ValueError as exc:
            raise ConfigError(f"constant {key.strip()}: not a number", key=key) from exc
    return values


def cmd_plan(args):
    try:
        if args.mode == "exact":
            if not args.constants:
                raise ConfigError("exact plans need --constants", key="constants")
            values = _parse_constants(args.constants)
            unknown = set(values) - cfg._CONSTANT_KEYS
            if unknown:
                raise ConfigError(f"unknown constants {sorted(unknown)}", key="constants")
            constants = planner.ProblemConstants(**values)
            plan = planner.plan_exact(constants, args.eps, args.k0_reading)
        else:
            if not args.coefficients or args.eta is None:
                raise ConfigError("order plans need --coefficients and --eta", key="coefficients")
            constants = None
            plan = planner.plan_order(args.eps, _parse_constants(args.coefficients), args.eta)
    except TypeError as exc:
        raise ConfigError(f"constants: {exc}", key="constants") from exc
    except StormError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), key="plan") from exc
    out = plan.to_dict()
    if constants is not None and plan.lhs is None:
        out["condition_lhs"], out["feasible"] = planner.condition_check(constants, plan)
    if args.json:
        print(json.dumps(out, indent=2, sort_keys=True))
    else:
        h = plan.hyper
        print(f"mode={plan.mode} eps={plan.eps} eta={h.eta:.6g} T={h.T}")
        print(f"a_g={h.a_g} a_dg={h.a_dg} a_phi={h.a_phi}")
        print(f"B_g={h.B_g} B_dg={h.B_dg} B_f={h.B_f} S_g={h.S_g} S_dg={h.S_dg} S_f={h.S_f}")
        if out.get("condition_lhs") is not None:
            verdict = "pass" if out["feasible"] else "fail"
            print(f"condition lhs={out['condition_lhs']:.6g} <= {planner.CONDITION_RHS}: {verdict}")
        print(f"projected IFO={plan.ifo}")
    return EXIT_OK


def cmd_gradcheck(args):
    if args.config:
        conf = cfg.load_config(args.config)
        problems = {conf.problem["kind"]: cfg.build_problem(conf.problem)}
    else:
        allp = verify.desk_problems(args.seed or 0)
        names = list(allp) if args.problem == "all" else [args.problem]
        problems = {n: allp[n] for n in names}
    failed = False
    reports = []
    for name, problem in problems.items():
        scale = 0.5 if name == "sne" else 1.0
        points = verify.random_points(problem, args.points, args.seed or 0, scale)
        report = diagnostics.grad_check(problem, points, step=args.step,
                                        tolerance=args.tolerance)
        reports.append(report.to_dict())
        failed |= not report.passed
        status = "PASS" if report.passed else "FAIL"
        print(f"{status} {name}: max rel err {report.max_error:.3g} (tol {args.tolerance:g})",
              file=sys.stderr)
    print(json.dumps(reports, indent=2, sort_keys=True))
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_verify(args):
    results = verify.run_suite(args.suite, seed=args.seed or 0)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser():
    parser = argparse.ArgumentParser(prog="stormc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required):
        p.add_argument("--config", required=config_required)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--include-diagnostics-ifo", action="store_true")

    common(sub.add_parser("run", help="run the configured algorithms"), True)
    common(sub.add_parser("bench", help="multi-seed runs plus IFO-binned aggregate"), True)

    p = sub.add_parser("plan", help="print a parameter plan")
    p.add_argument("--mode", choices=("exact", "order"), default="exact")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--constants", help="Delta=..,L_f=..,L_g=..,M_f=..,M_g=..,H1=..,H2=..,H3=..")
    p.add_argument("--coefficients", help="a_g=..,a_dg=..,...,T=.. (order mode)")
    p.add_argument("--eta", type=float)
    p.add_argument("--k0-reading", choices=planner.K0_READINGS, default="batch_free")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("gradcheck", help="finite-difference gradient validation")
    p.add_argument("--problem", choices=("all", "portfolio", "value_eval", "sne", "quadtoy"),
                   default="all")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--points", type=int, default=10)
    p.add_argument("--step", type=float, default=1e-6)
    p.add_argument("--tolerance", type=float, default=1e-5)

    p = sub.add_parser("verify", help="pinned-seed invariant and bound checks")
    p.add_argument("--suite", choices=verify.SUITES, default="all")
    p.add_argument("--seed", type=int)
    return parser


COMMANDS = {"run": cmd_run, "bench": cmd_bench, "plan": cmd_plan,
            "gradcheck": cmd_gradcheck, "verify": cmd_verify}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except BoundViolationError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
