"""Experiment configuration: YAML loading, strict schema validation, builders.

A config is a single YAML mapping::

    problem:
      kind: portfolio            # portfolio | value_eval | sne | quadtoy
      seed: 0                    # generator seed, independent of run seeds
      params: {T_s: 200, N: 20, condition_number: 4}
      data: returns.csv          # optional, replaces the generator
    algorithms: [storm-c, scgd]
    plan:
      mode: explicit             # explicit | order | exact
      params: {eta: 0.1, eps: 0.1, ...}
    scgd: {alpha0: 0.1, ...}     # optional; T defaults to the storm-c budget
    diagnostics: {cadence: 10, include_ifo: false}
    runtime_assertions: true
    output_rule: last            # last | uniform
    seeds: [0, 1, 2, 3, 4]
    output_dir: out

Unknown keys anywhere are rejected with their line number.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .. import planner
from ..exceptions import ConfigError, InvalidArgumentError, StormError
from ..optimizer import HyperParams, ScgdParams
from ..problems import (
    QuadToyProblem,
    generate_mdp,
    generate_portfolio,
    generate_sne,
    load_mdp_csv,
    load_returns_csv,
    portfolio_components,
    value_eval_components,
)

ALGORITHMS = ("storm-c", "scgd")
PLAN_MODES = ("explicit", "order", "exact")

PROBLEM_PARAMS = {
    "portfolio": {"T_s": 200, "N": 20, "condition_number": 4.0, "mean_scale": 1.0},
    "value_eval": {"n_states": 50, "n_actions": 4, "gamma_disc": 0.95, "n_samples": 100},
    "sne": {"n_points": 60, "ambient_dim": 10, "d": 2, "sigma": 1.0, "n_clusters": 3},
    "quadtoy": {"variant": "random", "d": 3, "l": 4, "m": 8, "n": 6, "noise": 0.3,
                "start_gap": 0.0},
}
SCGD_DEFAULTS = {"alpha0": 0.1, "beta0": 1.0, "alpha_decay": 0.75, "beta_decay": 0.5,
                 "B_g": 100, "B_dg": 100, "B_f": 100, "S_g": 100}

_TOP_KEYS = {"problem", "algorithms", "plan", "scgd", "diagnostics", "runtime_assertions",
             "output_rule", "seeds", "output_dir"}
_PROBLEM_KEYS = {"kind", "seed", "params", "data"}
_PLAN_KEYS = {"mode", "params", "eps", "eta", "constants", "k0_reading"}
_DIAG_KEYS = {"cadence", "include_ifo"}
_CONSTANT_KEYS = {"Delta", "L_f", "L_g", "M_f", "M_g", "H1", "H2", "H3", "L_Phi"}
_CONSTANT_SOURCES = {"source", "radius", "budget", "L_g", "seed"}


@dataclass
class ExperimentConfig:
    problem: dict
    algorithms: list
    plan: dict
    scgd: dict = field(default_factory=dict)
    cadence: int | None = None
    include_ifo: bool = False
    runtime_assertions: bool = True
    output_rule: str = "last"
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str | None = None
    source: str | None = None


class _Lines:
    """Line numbers of every mapping key, addressed by its key path."""

    def __init__(self, node):
        self.lines = {}
        self._walk(node, ())

    def _walk(self, node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = path + (str(k.value),)
                self.lines[key] = k.start_mark.line + 1
                self._walk(v, key)

    def of(self, path):
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path[:-1]
        return None


def _error(lines, path, message):
    line = lines.of(tuple(path)) if lines else None
    where = ".".join(path) or "<root>"
    prefix = f"line {line}: " if line else ""
    return ConfigError(f"{prefix}{where}: {message}", key=where)


def _mapping(value, lines, path):
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise _error(lines, path, "expected a mapping")
    return value


def _reject_unknown(mapping, allowed, lines, path):
    for key in mapping:
        if key not in allowed:
            raise _error(lines, path + [str(key)],
                         f"unknown key (allowed: {', '.join(sorted(allowed))})")


def _number(value, lines, path, integer=False, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _error(lines, path, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise _error(lines, path, f"expected an integer, got {value!r}")
    if positive and not value > 0:
        raise _error(lines, path, f"must be positive, got {value!r}")
    return int(value) if integer else float(value)


def load_config(path):
    """Parse and validate a YAML config file."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path))


def parse_config(text, source=None):
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    lines = _Lines(node) if node is not None else None
    return validate_config(data, lines=lines, source=source)


def validate_config(data, lines=None, source=None):
    data = _mapping(data, lines, [])
    _reject_unknown(data, _TOP_KEYS, lines, [])
    for key in ("problem", "algorithms", "plan"):
        if key not in data:
            raise _error(lines, [key], "required key missing")

    problem = _validate_problem(_mapping(data["problem"], lines, ["problem"]), lines)

    algorithms = data["algorithms"]
    if isinstance(algorithms, str):
        algorithms = [algorithms]
    if not isinstance(algorithms, list) or not algorithms:
        raise _error(lines, ["algorithms"], "expected a non-empty list")
    for i, algo in enumerate(algorithms):
        if algo not in ALGORITHMS:
            raise _error(lines, ["algorithms"], f"entry {i}: unknown algorithm {algo!r}")
    if len(set(algorithms)) != len(algorithms):
        raise _error(lines, ["algorithms"], "duplicate algorithm")

    plan = _validate_plan(_mapping(data["plan"], lines, ["plan"]), lines)

    scgd = dict(_mapping(data.get("scgd"), lines, ["scgd"]))
    _reject_unknown(scgd, set(SCGD_DEFAULTS) | {"T"}, lines, ["scgd"])
    for key, v in scgd.items():
        integer = key in ("B_g", "B_dg", "B_f", "S_g", "T")
        scgd[key] = _number(v, lines, ["scgd", key], integer=integer)

    diag = _mapping(data.get("diagnostics"), lines, ["diagnostics"])
    _reject_unknown(diag, _DIAG_KEYS, lines, ["diagnostics"])
    cadence = diag.get("cadence")
    if cadence is not None:
        cadence = _number(cadence, lines, ["diagnostics", "cadence"], integer=True,
                          positive=True)
    include_ifo = diag.get("include_ifo", False)
    if not isinstance(include_ifo, bool):
        raise _error(lines, ["diagnostics", "include_ifo"], "expected true or false")

    assertions = data.get("runtime_assertions", True)
    if not isinstance(assertions, bool):
        raise _error(lines, ["runtime_assertions"], "expected true or false")

    rule = data.get("output_rule", "last")
    if rule not in ("last", "uniform"):
        raise _error(lines, ["output_rule"], "expected 'last' or 'uniform'")

    seeds = data.get("seeds", [0])
    if isinstance(seeds, int) and not isinstance(seeds, bool):
        seeds = [seeds]
    if not isinstance(seeds, list) or not seeds:
        raise _error(lines, ["seeds"], "expected a non-empty list of integers")
    seeds = [_number(s, lines, ["seeds"], integer=True) for s in seeds]
    if any(s < 0 for s in seeds):
        raise _error(lines, ["seeds"], "seeds must be nonnegative")

    out = data.get("output_dir")
    if out is not None and not isinstance(out, str):
        raise _error(lines, ["output_dir"], "expected a path string")

    return ExperimentConfig(problem=problem, algorithms=list(algorithms), plan=plan,
                            scgd=scgd, cadence=cadence, include_ifo=include_ifo,
                            runtime_assertions=assertions, output_rule=rule,
                            seeds=seeds, output_dir=out, source=source)


def _validate_problem(spec, lines):
    _reject_unknown(spec, _PROBLEM_KEYS, lines, ["problem"])
    kind = spec.get("kind")
    if kind not in PROBLEM_PARAMS:
        raise _error(lines, ["problem", "kind"],
                     f"expected one of {', '.join(PROBLEM_PARAMS)}, got {kind!r}")
    params = dict(PROBLEM_PARAMS[kind])
    given = _mapping(spec.get("params"), lines, ["problem", "params"])
    _reject_unknown(given, set(params), lines, ["problem", "params"])
    for key, v in given.items():
        if key == "variant":
            if v not in ("random", "centered"):
                raise _error(lines, ["problem", "params", key], "expected random or centered")
            params[key] = v
            continue
        integer = isinstance(PROBLEM_PARAMS[kind][key], int)
        params[key] = _number(v, lines, ["problem", "params", key], integer=integer)
    seed = _number(spec.get("seed", 0), lines, ["problem", "seed"], integer=True)
    data = spec.get("data")
    if data is not None:
        if kind not in ("portfolio", "value_eval"):
            raise _error(lines, ["problem", "data"], f"data files are not supported for {kind}")
        if not isinstance(data, str):
            raise _error(lines, ["problem", "data"], "expected a path string")
    return {"kind": kind, "seed": seed, "params": params, "data": data}


def _validate_plan(spec, lines):
    _reject_unknown(spec, _PLAN_KEYS, lines, ["plan"])
    mode = spec.get("mode")
    if mode not in PLAN_MODES:
        raise _error(lines, ["plan", "mode"], f"expected one of {', '.join(PLAN_MODES)}")
    out = {"mode": mode}
    params = _mapping(spec.get("params"), lines, ["plan", "params"])
    if mode == "explicit":
        for key in ("eps", "eta", "constants", "k0_reading"):
            if key in spec:
                raise _error(lines, ["plan", key], "not used in explicit mode")
        fields = set(HyperParams.__dataclass_fields__)
        _reject_unknown(params, fields, lines, ["plan", "params"])
        missing = fields - set(params)
        if missing:
            raise _error(lines, ["plan", "params"], f"missing {sorted(missing)}")
        out["params"] = {
            k: _number(v, lines, ["plan", "params", k], integer=k[0] in "BST")
            for k, v in params.items()
        }
    elif mode == "order":
        for key in ("constants", "k0_reading"):
            if key in spec:
                raise _error(lines, ["plan", key], "not used in order mode")
        _reject_unknown(params, set(planner._ORDER_KEYS), lines, ["plan", "params"])
        out["params"] = {k: _number(v, lines, ["plan", "params", k], positive=True)
                         for k, v in params.items()}
        out["eps"] = _number(spec.get("eps"), lines, ["plan", "eps"], positive=True)
        out["eta"] = _number(spec.get("eta"), lines, ["plan", "eta"], positive=True)
    else:
        if params:
            raise _error(lines, ["plan", "params"], "not used in exact mode")
        if "eta" in spec:
            raise _error(lines, ["plan", "eta"], "exact plans fix eta = 1 / L_Phi")
        out["eps"] = _number(spec.get("eps"), lines, ["plan", "eps"], positive=True)
        reading = spec.get("k0_reading", "batch_free")
        if reading not in planner.K0_READINGS:
            raise _error(lines, ["plan", "k0_reading"],
                         f"expected one of {', '.join(planner.K0_READINGS)}")
        out["k0_reading"] = reading
        consts = _mapping(spec.get("constants"), lines, ["plan", "constants"])
        if "source" in consts:
            _reject_unknown(consts, _CONSTANT_SOURCES, lines, ["plan", "constants"])
            if consts["source"] not in ("analytic", "estimate"):
                raise _error(lines, ["plan", "constants", "source"],
                             "expected analytic or estimate")
            out["constants"] = {"source": consts["source"]}
            for key in ("radius", "budget", "L_g", "seed"):
                if key in consts:
                    out["constants"][key] = _number(
                        consts[key], lines, ["plan", "constants", key],
                        integer=key in ("budget", "seed"))
        else:
            _reject_unknown(consts, _CONSTANT_KEYS, lines, ["plan", "constants"])
            missing = _CONSTANT_KEYS - {"L_Phi"} - set(consts)
            if missing:
                raise _error(lines, ["plan", "constants"], f"missing {sorted(missing)}")
            out["constants"] = {k: _number(v, lines, ["plan", "constants", k])
                                for k, v in consts.items()}
    return out


def build_problem(spec, base_dir=None):
    """Instantiate the problem described by a validated ``problem`` section."""
    kind, p, seed = spec["kind"], spec["params"], spec["seed"]
    data = spec.get("data")
    if data is not None and base_dir is not None and not os.path.isabs(data):
        data = os.path.join(base_dir, data)
    try:
        if kind == "portfolio":
            if data is not None:
                return portfolio_components(load_returns_csv(data))
            return generate_portfolio(p["T_s"], p["N"], p["condition_number"], seed,
                                      mean_scale=p["mean_scale"])
        if kind == "value_eval":
            if data is not None:
                P, R = load_mdp_csv(data)
                return value_eval_components(P, R, p["gamma_disc"], n_samples=p["n_samples"],
                                             rng=seed)
            return generate_mdp(p["n_states"], p["n_actions"], seed,
                                gamma_disc=p["gamma_disc"], n_samples=p["n_samples"])
        if kind == "sne":
            return generate_sne(p["n_points"], p["ambient_dim"], seed, d=p["d"],
                                sigma=p["sigma"], n_clusters=p["n_clusters"])
        if p["variant"] == "centered":
            problem = QuadToyProblem.centered(d=p["d"], m=p["m"], n=p["n"], seed=seed,
                                              noise_A=p["noise"])
        else:
            problem = QuadToyProblem.random(d=p["d"], l=p["l"], m=p["m"], n=p["n"],
                                            seed=seed, noise=p["noise"])
        if p["start_gap"] > 0:
            problem.start = problem.point_with_gap(p["start_gap"])
        return problem
    except OSError as exc:
        raise ConfigError(f"cannot read problem data: {exc}", key="problem.data") from exc
    except (StormError, ValueError) as exc:
        raise ConfigError(f"problem: {exc}", key="problem") from exc


def resolve_constants(spec, problem, x0):
    if "source" not in spec:
        return planner.ProblemConstants(**spec)
    radius = spec.get("radius", 1.0)
    if spec["source"] == "analytic":
        if not hasattr(problem, "analytic_constants"):
            raise ConfigError("analytic constants are only available for quadtoy",
                              key="plan.constants.source")
        return problem.analytic_constants(x0, radius, L_g=spec.get("L_g", 0.0))
    return planner.estimate_constants(problem, radius, spec.get("budget", 50),
                                      np.random.default_rng(spec.get("seed", 0)), center=x0)


def build_plan(spec, problem=None, x0=None):
    """Resolve the ``plan`` section into ``(ParameterPlan, constants or None)``."""
    try:
        if spec["mode"] == "explicit":
            return planner.plan_explicit(**spec["params"]), None
        if spec["mode"] == "order":
            return planner.plan_order(spec["eps"], spec["params"], spec["eta"]), None
        constants = resolve_constants(spec["constants"], problem, x0)
        return planner.plan_exact(constants, spec["eps"], spec["k0_reading"]), constants
    except (StormError, TypeError) as exc:
        raise ConfigError(f"plan: {exc}", key="plan") from exc


def build_scgd(spec, storm_hyper):
    """SCGD schedule; ``T`` defaults to the storm-c IFO budget."""
    values = dict(SCGD_DEFAULTS)
    values.update(spec)
    if "T" not in values:
        budget = storm_hyper.init_ifo + storm_hyper.T * storm_hyper.step_ifo
        step = values["B_g"] + values["B_dg"] + values["B_f"]
        values["T"] = max(0, (budget - values["S_g"]) // step)
    try:
        return ScgdParams(**values)
    except InvalidArgumentError as exc:
        raise ConfigError(f"scgd: {exc}", key="scgd") from exc
