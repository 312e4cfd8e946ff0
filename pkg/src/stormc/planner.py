"""Theory-driven parameter planning for STORM-Compositional.

``plan_exact`` resolves the closed-form epsilon-accuracy plan (momentum
weights linear in eps, batch sizes inverse in eps, horizon inverse-square),
``condition_check`` evaluates the sufficient accuracy condition term by term
and ``plan_order`` builds plans from user coefficients of the same orders.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import core
from .exceptions import (
    DomainViolationError,
    InfeasibleEpsilonError,
    InvalidArgumentError,
    InvalidConstantsError,
)
from .optimizer import HyperParams

CONDITION_RHS = 1.0 / 16.0
_T_FACTOR = 32.0 / 3.0


@dataclass(frozen=True)
class ProblemConstants:
    """Smoothness, boundedness and variance constants of a problem.

    ``L_Phi`` defaults to ``M_f L_g + M_g^2 L_f`` and may be given
    explicitly when a sharper Lipschitz bound is known.
    """

    Delta: float
    L_f: float
    L_g: float
    M_f: float
    M_g: float
    H1: float
    H2: float
    H3: float
    L_Phi: float | None = None
    heuristic: bool = False

    def __post_init__(self):
        for name in ("Delta", "L_f", "L_g", "M_f", "M_g", "H1", "H2", "H3"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise InvalidConstantsError(f"{name} must be finite and >= 0, got {v}")
        if self.L_Phi is None:
            object.__setattr__(self, "L_Phi", l_phi(self))
        elif not (self.L_Phi >= 0 and math.isfinite(self.L_Phi)):
            raise InvalidConstantsError(f"L_Phi must be finite and >= 0, got {self.L_Phi}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


def l_phi(constants):
    return constants.M_f * constants.L_g + constants.M_g**2 * constants.L_f


def _require_positive(constants, names):
    bad = [n for n in names if not getattr(constants, n) > 0]
    if bad:
        raise InvalidConstantsError(f"constants must be strictly positive: {bad}")


def _k0_numerator(c):
    """``K0 * B_f``; independent of the batch size."""
    _require_positive(c, ("M_f", "M_g", "L_f", "L_Phi"))
    lp2 = c.L_Phi**2
    first = 4 * c.M_f**2 * (1 / (24 * c.M_f**2) + 3 * c.L_g**2 / lp2 + 1)
    second = 4 * c.L_f**2 * (2 * c.M_g + math.sqrt(c.H2)) * (
        1 / (24 * c.M_g**2 * c.L_f**2) + 3 * c.M_g**2 / lp2 + 1
    )
    return first + second


def k0(constants, B_f):
    if not B_f > 0:
        raise InvalidConstantsError(f"B_f must be positive, got {B_f}")
    return _k0_numerator(constants) / B_f


def eps_upper(constants):
    """Upper end of the admissible precision window for the exact plan."""
    c = constants
    _require_positive(c, ("L_g",))
    return min(
        1.0,
        72 * c.L_Phi * c.M_g * c.L_f**2 * math.sqrt(c.H3),
        72 * c.L_Phi * c.M_f**2 * math.sqrt(c.H2) / c.L_g,
    )


def ifo_total(S_g, S_dg, S_f, B_g, B_dg, B_f, T):
    return int(S_g + S_dg + S_f + T * (B_g + B_dg + B_f))


def _ceil(v):
    # tolerate representation error such as 864 / 0.1 = 8640.000000000001
    r = round(v)
    if abs(v - r) <= 1e-9 * max(1.0, abs(v)):
        return int(r)
    return int(math.ceil(v))


def _clean(v):
    return float(f"{v:.14g}")


@dataclass
class ParameterPlan:
    """Resolved plan: coefficients, hyperparameters at ``eps`` and feasibility."""

    mode: str
    eps: float
    alpha: dict
    beta: dict
    gamma: dict
    hyper: HyperParams
    K0: float | None = None
    lhs: float | None = None
    feasible: bool | None = None
    terms: dict = field(default_factory=dict)
    clamped: tuple = ()

    @property
    def ifo(self):
        h = self.hyper
        return ifo_total(h.S_g, h.S_dg, h.S_f, h.B_g, h.B_dg, h.B_f, h.T)

    def to_dict(self):
        return {
            "mode": self.mode,
            "eps": self.eps,
            "alpha": dict(self.alpha),
            "beta": dict(self.beta),
            "gamma": dict(self.gamma),
            "hyper": self.hyper.to_dict(),
            "K0": self.K0,
            "condition_lhs": self.lhs,
            "condition_rhs": CONDITION_RHS,
            "feasible": self.feasible,
            "terms": dict(self.terms),
            "clamped": list(self.clamped),
            "ifo": self.ifo,
        }


def solve_batch_fixed_point(constants, eps):
    """Solve ``B_f = 432 sqrt(2 (2 M_g + sqrt(H2)) H1 K0(B_f)) / eps`` for ``B_f``.

    ``K0(B_f) = C / B_f`` so the right side decreases in ``B_f``; the root is
    bracketed between tiny and huge values and found by Brent's method.
    """
    c = constants
    _require_positive(c, ("H1",))
    kappa = 2 * (2 * c.M_g + math.sqrt(c.H2)) * c.H1
    C = _k0_numerator(c)

    def gap(log_b):
        b = math.exp(log_b)
        return log_b - math.log(432 * math.sqrt(kappa * C / b) / eps)

    lo, hi = -50.0, 100.0
    if not gap(lo) < 0 < gap(hi):
        raise InvalidConstantsError("batch-size fixed point is not bracketed")
    log_b = brentq(gap, lo, hi, xtol=1e-14, rtol=1e-12, maxiter=500)
    return math.exp(log_b)


K0_READINGS = ("batch_free", "fixed_point")


def plan_exact(constants, eps, k0_reading="batch_free"):
    """Closed-form plan reaching an eps-accurate output in expectation.

    ``k0_reading`` selects how the K0 constant is tied to the outer batch
    size. ``"batch_free"`` uses ``K0 = k0(constants, 1)``, the coefficient
    multiplying ``1 / (a_phi B_f)`` in the F-error bound; every momentum
    weight is then linear in eps and every batch size inverse in eps.
    ``"fixed_point"`` keeps the ``1 / B_f`` factor and solves the resulting
    self-consistency equation for ``B_f`` (see ``solve_batch_fixed_point``).
    """
    if k0_reading not in K0_READINGS:
        raise InvalidArgumentError(f"k0_reading must be one of {K0_READINGS}")
    c = constants
    _require_positive(c, ("Delta", "L_f", "L_g", "M_f", "M_g", "H1", "H2", "H3", "L_Phi"))
    upper = eps_upper(c)
    if not 0 < eps < upper:
        raise InfeasibleEpsilonError(eps, upper)
    lp = c.L_Phi
    sq2, sq3 = math.sqrt(c.H2), math.sqrt(c.H3)

    if k0_reading == "fixed_point":
        K0 = _k0_numerator(c) / solve_batch_fixed_point(c, eps)
    else:
        K0 = _k0_numerator(c)
    kappa = 2 * (2 * c.M_g + sq2) * c.H1

    alpha = {
        "g": c.M_g / (lp * sq3),
        "dg": c.L_g / (lp * sq2),
        "phi": math.sqrt(K0 / kappa),
    }
    beta_f = 432 * math.sqrt(kappa * K0)
    beta = {
        "g": 864 * c.M_g**3 * c.L_f**2 * sq3 / lp,
        "dg": 864 * c.M_f**2 * c.L_g * sq2 / lp,
        "f": beta_f,
    }
    gamma = {
        "g": 81 * c.M_g * c.L_f**2 * c.H3**1.5 / c.Delta,
        "dg": 81 * c.M_f**2 * c.H2**1.5 / (c.Delta * c.L_g),
        "f": c.M_g**2 * c.H1 / (_T_FACTOR * lp * c.Delta * K0) * beta_f,
    }
    plan = _resolve("exact", eps, alpha, beta, gamma, eta=1.0 / lp,
                    T=_ceil(_T_FACTOR * lp * c.Delta / eps**2))
    plan.K0 = K0
    lhs, terms = _condition_terms(c, alpha, beta, gamma, eps)
    plan.lhs, plan.terms, plan.feasible = lhs, terms, lhs <= CONDITION_RHS
    return plan


def _resolve(mode, eps, alpha, beta, gamma, eta, T):
    a, clamped = {}, []
    for key in ("g", "dg", "phi"):
        v = _clean(alpha[key] * eps)
        if v > 1.0:
            clamped.append(f"a_{key}")
            v = 1.0
        a[key] = v
    hyper = HyperParams(
        eta=eta, eps=eps, a_g=a["g"], a_dg=a["dg"], a_phi=a["phi"],
        B_g=max(1, _ceil(beta["g"] / eps)), B_dg=max(1, _ceil(beta["dg"] / eps)),
        B_f=max(1, _ceil(beta["f"] / eps)),
        S_g=max(1, _ceil(gamma["g"] / eps)), S_dg=max(1, _ceil(gamma["dg"] / eps)),
        S_f=max(1, _ceil(gamma["f"] / eps)),
        T=int(T),
    )
    return ParameterPlan(mode, eps, dict(alpha), dict(beta), dict(gamma), hyper,
                         clamped=tuple(clamped))


_ORDER_KEYS = ("a_g", "a_dg", "a_phi", "B_g", "B_dg", "B_f", "S_g", "S_dg", "S_f", "T")


def plan_order(eps, coefficients, eta):
    """Plan from order-of-magnitude coefficients.

    ``a = c * eps`` (clamped to 1), ``B, S = ceil(c / eps)``,
    ``T = ceil(c_T / eps^2)``; ``eta`` is taken as given.
    """
    if not eps > 0:
        raise InvalidArgumentError("eps must be positive")
    missing = set(_ORDER_KEYS) - set(coefficients)
    unknown = set(coefficients) - set(_ORDER_KEYS)
    if missing or unknown:
        raise InvalidArgumentError(
            f"order plan coefficients: missing {sorted(missing)}, unknown {sorted(unknown)}"
        )
    for key, v in coefficients.items():
        if not (v > 0 and math.isfinite(v)):
            raise InvalidArgumentError(f"coefficient {key} must be positive, got {v}")
    alpha = {"g": coefficients["a_g"], "dg": coefficients["a_dg"], "phi": coefficients["a_phi"]}
    beta = {"g": coefficients["B_g"], "dg": coefficients["B_dg"], "f": coefficients["B_f"]}
    gamma = {"g": coefficients["S_g"], "dg": coefficients["S_dg"], "f": coefficients["S_f"]}
    T = _ceil(coefficients["T"] / eps**2)
    return _resolve("order", eps, alpha, beta, gamma, eta=eta, T=T)


def plan_explicit(**values):
    """Plan whose hyperparameters are given verbatim."""
    hyper = HyperParams(**values)
    eps = hyper.eps
    alpha = {"g": hyper.a_g / eps, "dg": hyper.a_dg / eps, "phi": hyper.a_phi / eps}
    beta = {"g": hyper.B_g * eps, "dg": hyper.B_dg * eps, "f": hyper.B_f * eps}
    gamma = {"g": hyper.S_g * eps, "dg": hyper.S_dg * eps, "f": hyper.S_f * eps}
    return ParameterPlan("explicit", eps, alpha, beta, gamma, hyper)


def _condition_terms(c, alpha, beta, gamma, eps):
    _require_positive(c, ("L_Phi", "Delta"))
    for group in (alpha, beta, gamma):
        for key, v in group.items():
            if not v > 0:
                raise InvalidConstantsError(f"plan coefficient {key} must be positive")
    ag, adg, aphi = alpha["g"], alpha["dg"], alpha["phi"]
    bg, bdg, bf = beta["g"], beta["dg"], beta["f"]
    cg, cdg, cf = gamma["g"], gamma["dg"], gamma["f"]
    lp, D = c.L_Phi, c.Delta
    horizon = _T_FACTOR * lp * D
    kappa = 2 * c.M_g + c.L_g / (lp * adg)
    af = aphi * bf

    terms = {
        "smoothness": (
            36 * c.M_f**2 * c.L_g**2 / af * (4 / (adg * bdg) + 2 * eps / bdg + 1)
            + 36 * c.L_f**2 * c.M_g**2 / af * kappa * (4 / (ag * bg) + 2 * eps / bg + 1)
            + 6 * c.M_f**2 * c.L_g**2 / (adg * bdg)
            + 6 * c.M_g**4 * c.L_f**2 / (ag * bg)
        ) / lp**2,
        "init_dg": 6 * c.M_f**2 * c.H2 / (horizon * adg * cdg) * (24 / af + 1),
        "init_g": 6 * c.L_f**2 * c.H3 / (horizon * ag * cg) * (24 / af * kappa + c.M_g**2),
        "init_f": 3 * c.M_g**2 * c.H1 / (horizon * aphi * cf),
        "var_dg_cross": 72 * c.M_f**2 * adg * c.H2 / (af * bdg) * (2 + adg * eps),
        "var_g_cross": 72 * c.L_f**2 * ag * c.H3 / (af * bg) * kappa * (2 + ag * eps),
        "var_f": 6 * aphi / bf * kappa**2 * c.H1,
        "var_dg": 6 * c.M_f**2 * adg * c.H2 / bdg,
        "var_g": 6 * c.M_g**2 * c.L_f**2 * ag * c.H3 / bg,
    }
    return float(sum(terms.values())), terms


def condition_check(constants, plan, eps=None):
    """Evaluate the sufficient accuracy condition; returns ``(lhs, passed)``."""
    eps = plan.eps if eps is None else eps
    lhs, _ = _condition_terms(constants, plan.alpha, plan.beta, plan.gamma, eps)
    return lhs, lhs <= CONDITION_RHS


def theorem_ifo(plan, constants):
    """Symbolic IFO ``(sum gamma) / eps + T_factor L_Phi Delta (sum beta) / eps^3``."""
    eps = plan.eps
    return (sum(plan.gamma.values()) / eps
            + _T_FACTOR * constants.L_Phi * constants.Delta * sum(plan.beta.values()) / eps**3)


def estimate_constants(problem, domain_radius, sample_budget, rng, center=None):
    """Empirical constants over random points in a ball; labelled heuristic.

    Boundedness constants are maxima of sampled component norms, Lipschitz
    constants maxima of difference quotients over sampled pairs (plus, for
    ``L_f``, random shifts of the inner value), variances
    maxima of sampled component variances and ``Delta`` is ``Phi(center)``
    minus the smallest sampled objective.
    """
    if not domain_radius > 0:
        raise InvalidArgumentError("domain_radius must be positive")
    rng = core.make_rng(rng)
    center = problem.default_x0() if center is None else np.asarray(center, dtype=np.float64)
    d = problem.d
    all_m, all_n = np.arange(problem.m), np.arange(problem.n)

    def ball_point():
        v = rng.standard_normal(d)
        r = domain_radius * rng.random() ** (1.0 / d)
        return center + r * v / max(np.linalg.norm(v), 1e-300)

    M_g = M_f = L_g = L_f = H1 = H2 = H3 = 0.0
    phi0 = problem.exact_phi(center)
    best = phi0
    pts = [center] + [ball_point() for _ in range(max(1, int(sample_budget)))]
    prev = None
    for x in pts:
        gs = problem.g_components(x, all_m)
        Js = problem.jacobian_components(x, all_m)
        y = gs.mean(axis=0)
        gf = problem.grad_f_components(y, all_n)
        M_g = max(M_g, float(np.max(np.linalg.norm(Js, ord=2, axis=(1, 2)))))
        M_f = max(M_f, float(np.max(np.linalg.norm(gf, axis=1))))
        H3 = max(H3, float(np.mean(np.sum((gs - y) ** 2, axis=1))))
        H2 = max(H2, float(np.mean(np.sum((Js - Js.mean(axis=0)) ** 2, axis=(1, 2)))))
        H1 = max(H1, float(np.mean(np.sum((gf - gf.mean(axis=0)) ** 2, axis=1))))
        best = min(best, problem.exact_f(y))
        # probe the outer gradient along a random direction in the full y-space
        u = rng.standard_normal(problem.l)
        dy = domain_radius * u / max(np.linalg.norm(u), 1e-300)
        try:
            shifted = problem.grad_f_components(y + dy, all_n)
        except DomainViolationError:
            shifted = None
        if shifted is not None:
            L_f = max(L_f, float(np.max(np.linalg.norm(shifted - gf, axis=1))) / domain_radius)
        if prev is not None:
            px, pJ, py, pgf = prev
            dx = np.linalg.norm(x - px)
            if dx > 0:
                L_g = max(L_g, float(np.max(np.sqrt(np.sum((Js - pJ) ** 2, axis=(1, 2))))) / dx)
            dy = np.linalg.norm(y - py)
            if dy > 0:
                L_f = max(L_f, float(np.max(np.linalg.norm(gf - pgf, axis=1))) / dy)
        prev = (x, Js, y, gf)
    return ProblemConstants(
        Delta=max(phi0 - best, 0.0), L_f=L_f, L_g=L_g, M_f=M_f, M_g=M_g,
        H1=H1, H2=H2, H3=H3, heuristic=True,
    )
