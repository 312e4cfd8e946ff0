"""Pinned-seed verification suites behind ``stormc verify``."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import diagnostics, planner
from ..optimizer import HyperParams, run_storm_c
from ..problems import QuadToyProblem, generate_mdp, generate_portfolio, generate_sne

SUITES = ("invariants", "bounds", "all")


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


def desk_problems(seed=0):
    """The three benchmark problems at desk scale plus the QuadToy."""
    return {"portfolio": generate_portfolio(200, 20, 4.0, seed),
            "value_eval": generate_mdp(50, 4, seed),
            "sne": generate_sne(60, 10, seed),
            "quadtoy": QuadToyProblem.random(seed=seed)}


def small_hyper(T=50, eta=0.1, eps=0.1, a=0.1, B=8, S=16):
    return HyperParams(eta=eta, eps=eps, a_g=a, a_dg=a, a_phi=a, B_g=B, B_dg=B, B_f=B,
                       S_g=S, S_dg=S, S_f=S, T=T)


def random_points(problem, count, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    x0 = problem.default_x0()
    return [x0 + scale * rng.standard_normal(problem.d) for _ in range(count)]


def check_full_information(seed=0, T=200, tol=1e-9):
    problem = QuadToyProblem.random(seed=seed)
    rec = run_storm_c(problem, small_hyper(T=T), seed, cadence=1, full_information=True,
                      x0=np.ones(problem.d))
    # errors relative to max(1, |exact|); g and G norms are O(1) here
    f_rel = np.sqrt(rec.column("est_err_f")) / np.maximum(1.0, rec.column("grad_norm"))
    worst = max(float(f_rel.max()), math.sqrt(max(rec.est_err_g)), math.sqrt(max(rec.est_err_G)))
    return CheckResult("full_information_exactness", worst <= tol,
                       f"max relative estimate error {worst:.3g} over T={T}")


def check_step_bound(problems, seed=0):
    detail, ok = [], True
    for name, problem in problems.items():
        rec = run_storm_c(problem, small_hyper(), seed)
        bad = diagnostics.assert_runtime_bounds(rec, small_hyper())
        ok &= not bad
        detail.append(f"{name}:{len(bad)}")
    return CheckResult("step_length_bound", ok, "violations " + " ".join(detail))


def check_ifo(problems, seed=0):
    hyper = small_hyper(T=20)
    ok = True
    for problem in problems.values():
        rec = run_storm_c(problem, hyper, seed)
        expected = [planner.ifo_total(hyper.S_g, hyper.S_dg, hyper.S_f, hyper.B_g,
                                      hyper.B_dg, hyper.B_f, t) for t in range(hyper.T + 1)]
        ok &= rec.ifo == expected
    return CheckResult("ifo_accounting", ok, f"{len(problems)} problems, T={hyper.T}")


def check_gradients(problems, seed=0, tolerance=1e-5):
    ok, detail = True, []
    for name, problem in problems.items():
        scale = 1.0 if name != "sne" else 0.5
        report = diagnostics.grad_check(problem, random_points(problem, 10, seed, scale),
                                        tolerance=tolerance)
        ok &= report.passed
        detail.append(f"{name}:{report.max_error:.2g}")
    return CheckResult("gradient_oracles", ok, "max rel err " + " ".join(detail))


def corollary_setup(seed=0):
    problem = QuadToyProblem.centered(seed=seed)
    hyper = HyperParams(eta=0.1, eps=0.1, a_g=0.1, a_dg=0.1, a_phi=0.1, B_g=4, B_dg=4,
                        B_f=4, S_g=4, S_dg=4, S_f=4, T=200)
    x0 = problem.point_with_gap(0.05)
    constants = problem.analytic_constants(x0, hyper.T * hyper.eta * hyper.eps)
    return problem, hyper, x0, constants


def check_corollary(n_seeds=50):
    problem, hyper, x0, constants = corollary_setup()
    reports = diagnostics.check_corollary_a1(problem, constants, hyper, range(n_seeds), x0=x0)
    return [CheckResult(r.name, r.passed, f"lhs {r.lhs:.4g} rhs {r.rhs:.4g} se {r.stderr:.2g}")
            for r in reports]


def planned_setup(eps_values=(0.1, 0.05), gap=0.02, L_g=0.5, seed=0):
    """Centered QuadToy with constants valid for the planned runs at every eps."""
    problem = QuadToyProblem.centered(seed=seed)
    x0 = problem.point_with_gap(gap)
    radius = planner._T_FACTOR * gap / min(eps_values)
    constants = problem.analytic_constants(x0, radius, L_g=L_g)
    return problem, x0, constants


def planned_runs(problem, x0, constants, eps, seeds):
    plan = planner.plan_exact(constants, eps)
    records = [run_storm_c(problem, plan.hyper, s, cadence=1, x0=x0, seed=s) for s in seeds]
    return plan, records


def check_theorem(n_seeds=20, eps=0.1):
    problem, x0, constants = planned_setup()
    plan, records = planned_runs(problem, x0, constants, eps, range(n_seeds))
    T = plan.hyper.T
    f_err = np.mean([r.column("est_err_f")[:T].mean() for r in records])
    A = max(1.0 / 16.0, f_err / eps**2)
    report = diagnostics.check_theorem_bound(records, problem, constants, eps, A=A)
    return CheckResult("theorem_bound", report.passed,
                       f"mean |grad| {report.lhs:.3g} rhs {report.rhs:.3g} (A={A:.4g})")


def check_g_norm(seed=0):
    problem = QuadToyProblem.random(seed=seed)
    hyper = small_hyper(T=100)
    x0 = problem.default_x0()
    constants = problem.analytic_constants(x0, hyper.T * hyper.eta * hyper.eps)
    rec = run_storm_c(problem, hyper, seed, cadence=1, full_information=True)
    bad = [v for v in diagnostics.assert_runtime_bounds(rec, hyper, constants)
           if v.check == "G_norm"]
    return CheckResult("g_norm_bound", not bad, f"{len(bad)} violations")


def run_suite(name, seed=0):
    if name not in SUITES:
        raise ValueError(f"suite must be one of {SUITES}")
    results = []
    if name in ("invariants", "all"):
        problems = desk_problems(seed)
        results += [check_full_information(seed), check_step_bound(problems, seed),
                    check_ifo(problems, seed), check_gradients(problems, seed),
                    check_g_norm(seed)]
    if name in ("bounds", "all"):
        results += check_corollary()
        results.append(check_theorem())
    return results
