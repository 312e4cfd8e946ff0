"""STORM-Compositional main loop, normalized step rule and SCGD baseline."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import core
from .estimators import MomentumParams, init_state_from_batches, step_estimators
from .exceptions import DomainViolationError, InvalidArgumentError, NumericalFailure

OUTPUT_RULES = ("last", "uniform")


@dataclass(frozen=True)
class HyperParams:
    """Learning rate, precision, momentum weights, batch sizes and horizon.

    ``eta = 0`` is admitted and freezes the iterate.
    """

    eta: float
    eps: float
    a_g: float
    a_dg: float
    a_phi: float
    B_g: int
    B_dg: int
    B_f: int
    S_g: int
    S_dg: int
    S_f: int
    T: int

    def __post_init__(self):
        if not (self.eta >= 0 and math.isfinite(self.eta)):
            raise InvalidArgumentError(f"eta must be finite and >= 0, got {self.eta}")
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise InvalidArgumentError(f"eps must be finite and > 0, got {self.eps}")
        for name in ("B_g", "B_dg", "B_f", "S_g", "S_dg", "S_f"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise InvalidArgumentError(f"{name} must be an integer >= 1, got {v}")
        if int(self.T) != self.T or self.T < 0:
            raise InvalidArgumentError(f"T must be an integer >= 0, got {self.T}")
        MomentumParams(self.a_g, self.a_dg, self.a_phi)

    @property
    def momentum(self):
        return MomentumParams(self.a_g, self.a_dg, self.a_phi)

    @property
    def init_ifo(self):
        return int(self.S_g + self.S_dg + self.S_f)

    @property
    def step_ifo(self):
        return int(self.B_g + self.B_dg + self.B_f)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise InvalidArgumentError(f"unknown hyperparameters: {sorted(unknown)}")
        return cls(**data)


@dataclass
class RunRecord:
    """Per-iteration metrics of one run; row ``t`` describes iterate ``x_t``.

    ``gamma[t]`` and ``step_norm[t]`` refer to the move from ``x_{t-1}`` to
    ``x_t`` and are NaN for ``t = 0``. Diagnostic columns are NaN except at
    checkpoints.
    """

    algo: str
    problem: str
    seed: int | None
    ifo: list = field(default_factory=list)
    diag_ifo: list = field(default_factory=list)
    gamma: list = field(default_factory=list)
    f_norm: list = field(default_factory=list)
    step_norm: list = field(default_factory=list)
    phi: list = field(default_factory=list)
    obj_gap: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    est_err_f: list = field(default_factory=list)
    est_err_g: list = field(default_factory=list)
    est_err_G: list = field(default_factory=list)
    G_opnorm: list = field(default_factory=list)
    x0: np.ndarray | None = None
    x_final: np.ndarray | None = None
    x_hat: np.ndarray | None = None
    selected_t: int | None = None
    completed: bool = False

    COLUMNS = ("ifo", "diag_ifo", "gamma", "f_norm", "step_norm", "phi", "obj_gap",
               "grad_norm", "est_err_f", "est_err_g", "est_err_G", "G_opnorm")

    def __len__(self):
        return len(self.ifo)

    @property
    def n_iter(self):
        return len(self.ifo) - 1

    def column(self, name):
        dtype = np.int64 if name in ("ifo", "diag_ifo") else np.float64
        return np.asarray(getattr(self, name), dtype=dtype)

    def checkpoints(self):
        return np.flatnonzero(np.isfinite(self.column("grad_norm")))

    def _append(self, ifo, diag_ifo, gamma, f_norm, step_norm, diag):
        self.ifo.append(int(ifo))
        self.diag_ifo.append(int(diag_ifo))
        self.gamma.append(gamma)
        self.f_norm.append(f_norm)
        self.step_norm.append(step_norm)
        for key in ("phi", "obj_gap", "grad_norm", "est_err_f", "est_err_g",
                    "est_err_G", "G_opnorm"):
            getattr(self, key).append(diag.get(key, math.nan))


def normalized_step(x, F, eta, eps, iteration=None):
    """Move toward ``x - eta F`` by at most ``eta * eps``.

    Returns ``(x_next, gamma)`` with ``gamma = min(eta eps / ||eta F||, 1/2)``
    and ``gamma = 1/2`` when the drift vanishes.
    """
    F = np.asarray(F, dtype=np.float64)
    if not np.all(np.isfinite(F)):
        raise NumericalFailure("non-finite gradient estimate", iteration=iteration)
    drift = -eta * F
    norm = float(np.linalg.norm(drift))
    gamma = 0.5 if norm == 0.0 else min(eta * eps / norm, 0.5)
    return x + gamma * drift, gamma


def default_cadence(T):
    return max(1, T // 100)


def diagnose(problem, x, state=None, g_aux=None):
    """Exact-pass diagnostics at ``x``; estimator errors when a state is given."""
    g = problem.exact_g(x)
    J = problem.exact_jacobian(x)
    grad = J.T @ problem.exact_grad_f(g)
    phi = problem.exact_f(g)
    out = {"phi": phi, "grad_norm": float(np.linalg.norm(grad))}
    opt = problem.optimal_value()
    if opt is not None:
        out["obj_gap"] = phi - opt
    if state is not None:
        out["est_err_f"] = float(np.sum((state.F_est - grad) ** 2))
        out["est_err_g"] = float(np.sum((state.g_est - g) ** 2))
        out["est_err_G"] = float(np.sum((state.G_est - J) ** 2))
        out["G_opnorm"] = float(np.linalg.norm(state.G_est, ord=2))
    elif g_aux is not None:
        out["est_err_g"] = float(np.sum((g_aux - g) ** 2))
    return out


def _diag_cost(problem):
    return 2 * problem.m + 2 * problem.n


def _select_output(record, history, output_rule, rng):
    T = record.n_iter
    if output_rule == "uniform" and T > 0:
        t = int(rng.integers(1, T + 1))
        record.selected_t = t
        record.x_hat = history[t - 1].copy()
    else:
        record.selected_t = T
        record.x_hat = record.x_final.copy()


def _check_rule(output_rule):
    if output_rule not in OUTPUT_RULES:
        raise InvalidArgumentError(f"output_rule must be one of {OUTPUT_RULES}")


def run_storm_c(problem, params, rng, output_rule="last", cadence=None, x0=None,
                full_information=False, seed=None):
    """Run STORM-Compositional for ``params.T`` iterations.

    With ``full_information=True`` every minibatch mean is replaced by the
    exact full mean (no sampling happens) while IFO is still counted at the
    nominal batch sizes.
    """
    core.check_problem(problem)
    _check_rule(output_rule)
    rng = core.make_rng(rng)
    T = int(params.T)
    cadence = default_cadence(T) if cadence is None else int(cadence)
    if cadence < 1:
        raise InvalidArgumentError("cadence must be >= 1")
    x = core.check_point(problem.default_x0() if x0 is None else x0, problem.d, "x0")
    record = RunRecord("storm-c", problem.name, seed, x0=x.copy())
    momentum = params.momentum

    def sample(pools_sizes):
        if full_information:
            return (None, None, None)
        return tuple(core.sample_with_replacement(p, b, rng) for p, b in pools_sizes)

    it = 0
    try:
        batches = sample(((problem.m, params.S_g), (problem.m, params.S_dg),
                          (problem.n, params.S_f)))
        state = init_state_from_batches(problem, x, *batches)
        ifo = params.init_ifo
        diag_ifo = 0
        if not state.is_finite():
            raise NumericalFailure("non-finite initial estimates", iteration=0)
        diag_ifo += _diag_cost(problem)
        record._append(ifo, diag_ifo, math.nan, float(np.linalg.norm(state.F_est)),
                       math.nan, diagnose(problem, x, state))
        history = [] if output_rule == "uniform" else None
        step_pools = ((problem.m, params.B_g), (problem.m, params.B_dg),
                      (problem.n, params.B_f))
        for it in range(1, T + 1):
            x_new, gamma = normalized_step(x, state.F_est, params.eta, params.eps, it)
            batches = sample(step_pools)
            state = step_estimators(state, problem, x_new, x, batches, momentum)
            step = float(np.linalg.norm(x_new - x))
            x = x_new
            ifo += params.step_ifo
            if not (state.is_finite() and np.all(np.isfinite(x))):
                raise NumericalFailure("non-finite iterate or estimate", iteration=it)
            diag = {}
            if it % cadence == 0 or it == T:
                diag_ifo += _diag_cost(problem)
                diag = diagnose(problem, x, state)
            record._append(ifo, diag_ifo, gamma, float(np.linalg.norm(state.F_est)),
                           step, diag)
            if history is not None:
                history.append(x.copy())
    except DomainViolationError as exc:
        record.x_final = x.copy()
        raise NumericalFailure(f"domain violation: {exc}", iteration=it,
                               record=record) from exc
    except NumericalFailure as exc:
        record.x_final = x.copy()
        exc.record = record
        raise
    record.x_final = x.copy()
    record.completed = True
    _select_output(record, history, output_rule, rng)
    return record


@dataclass(frozen=True)
class ScgdParams:
    """Two-timescale SCGD schedules ``alpha0 / t^alpha_decay``, ``beta0 / t^beta_decay``."""

    alpha0: float
    beta0: float
    alpha_decay: float
    beta_decay: float
    B_g: int
    B_dg: int
    B_f: int
    S_g: int
    T: int

    def __post_init__(self):
        if self.alpha0 <= 0 or self.beta0 <= 0:
            raise InvalidArgumentError("SCGD schedules must be positive")
        if self.alpha_decay < 0 or self.beta_decay < 0:
            raise InvalidArgumentError("SCGD decay exponents must be >= 0")
        for name in ("B_g", "B_dg", "B_f", "S_g"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1")
        if self.T < 0:
            raise InvalidArgumentError("T must be >= 0")

    def alpha(self, t):
        return self.alpha0 / t**self.alpha_decay

    def beta(self, t):
        return min(1.0, self.beta0 / t**self.beta_decay)

    @property
    def step_ifo(self):
        return int(self.B_g + self.B_dg + self.B_f)

    def to_dict(self):
        return asdict(self)


def run_scgd(problem, params, rng, cadence=None, x0=None, full_information=False,
             seed=None):
    """Stochastic compositional gradient descent baseline.

    ``y`` tracks ``g(x)`` by a ``beta_t`` running average and ``x`` moves along
    ``-alpha_t (dg)^T grad f(y)``. Initialisation draws ``S_g`` inner samples,
    so IFO is ``S_g + t (B_g + B_dg + B_f)``.
    """
    core.check_problem(problem)
    rng = core.make_rng(rng)
    T = int(params.T)
    cadence = default_cadence(T) if cadence is None else int(cadence)
    x = core.check_point(problem.default_x0() if x0 is None else x0, problem.d, "x0")
    record = RunRecord("scgd", problem.name, seed, x0=x.copy())

    def draw(pool, size):
        return None if full_information else core.sample_with_replacement(pool, size, rng)

    def g_of(x, b):
        return problem.exact_g(x) if b is None else core.minibatch_g(problem, x, b)

    it = 0
    try:
        y = g_of(x, draw(problem.m, params.S_g))
        ifo = params.S_g
        diag_ifo = _diag_cost(problem)
        record._append(ifo, diag_ifo, math.nan, math.nan, math.nan,
                       diagnose(problem, x, g_aux=y))
        for it in range(1, T + 1):
            alpha, beta = params.alpha(it), params.beta(it)
            y = (1.0 - beta) * y + beta * g_of(x, draw(problem.m, params.B_g))
            bdg, bf = draw(problem.m, params.B_dg), draw(problem.n, params.B_f)
            J = problem.exact_jacobian(x) if bdg is None else core.minibatch_jacobian(problem, x, bdg)
            gf = problem.exact_grad_f(y) if bf is None else core.minibatch_grad_f(problem, y, bf)
            direction = J.T @ gf
            x_new = x - alpha * direction
            step = float(np.linalg.norm(x_new - x))
            x = x_new
            ifo += params.step_ifo
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
                raise NumericalFailure("non-finite SCGD iterate", iteration=it)
            diag = {}
            if it % cadence == 0 or it == T:
                diag_ifo += _diag_cost(problem)
                diag = diagnose(problem, x, g_aux=y)
            record._append(ifo, diag_ifo, alpha, float(np.linalg.norm(direction)), step, diag)
    except DomainViolationError as exc:
        record.x_final = x.copy()
        raise NumericalFailure(f"domain violation: {exc}", iteration=it,
                               record=record) from exc
    except NumericalFailure as exc:
        record.x_final = x.copy()
        exc.record = record
        raise
    record.x_final = x.copy()
    record.x_hat = x.copy()
    record.selected_t = T
    record.completed = True
    return record
