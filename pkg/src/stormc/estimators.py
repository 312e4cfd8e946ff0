"""STORM moving-average recursion and the coupled (g, G, F) estimators.

Every update evaluates one minibatch at both the new and the old point so
the correction term ``q(x_new, B) - q(x_old, B)`` is correlated. Passing
``batch=None`` substitutes the exact full mean, which is how the
full-information test mode is realised.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import core
from .exceptions import InvalidArgumentError


@dataclass(frozen=True)
class MomentumParams:
    a_g: float
    a_dg: float
    a_phi: float

    def __post_init__(self):
        for name in ("a_g", "a_dg", "a_phi"):
            a = getattr(self, name)
            if not 0.0 < a <= 1.0:
                raise InvalidArgumentError(f"{name} must lie in (0, 1], got {a}")


@dataclass
class EstimatorState:
    """Running estimates of ``g(x_t)``, ``dg(x_t)`` and ``grad Phi(x_t)``."""

    g_est: np.ndarray
    G_est: np.ndarray
    F_est: np.ndarray

    def copy(self):
        return EstimatorState(self.g_est.copy(), self.G_est.copy(), self.F_est.copy())

    def is_finite(self):
        return bool(
            np.all(np.isfinite(self.g_est))
            and np.all(np.isfinite(self.G_est))
            and np.all(np.isfinite(self.F_est))
        )


def storm_recursion(prev, new_at_xnew, new_at_xold, a):
    """``(1-a) prev + a new + (1-a)(new - old)``, written as ``new + (1-a)(prev - old)``."""
    prev = np.asarray(prev, dtype=np.float64)
    new_at_xnew = np.asarray(new_at_xnew, dtype=np.float64)
    new_at_xold = np.asarray(new_at_xold, dtype=np.float64)
    if not (prev.shape == new_at_xnew.shape == new_at_xold.shape):
        raise InvalidArgumentError(
            f"shape mismatch: {prev.shape}, {new_at_xnew.shape}, {new_at_xold.shape}"
        )
    if not 0.0 < a <= 1.0:
        raise InvalidArgumentError(f"momentum weight must lie in (0, 1], got {a}")
    if a == 1.0:
        return new_at_xnew.copy()
    return new_at_xnew + (1.0 - a) * (prev - new_at_xold)


def _g(problem, x, batch):
    return problem.exact_g(x) if batch is None else core.minibatch_g(problem, x, batch)


def _jac(problem, x, batch):
    if batch is None:
        return problem.exact_jacobian(x)
    return core.minibatch_jacobian(problem, x, batch)


def _grad_f(problem, y, batch):
    if batch is None:
        return problem.exact_grad_f(y)
    return core.minibatch_grad_f(problem, y, batch)


def init_state_from_batches(problem, x0, batch_g, batch_dg, batch_f):
    g0 = _g(problem, x0, batch_g)
    G0 = _jac(problem, x0, batch_dg)
    F0 = G0.T @ _grad_f(problem, g0, batch_f)
    return EstimatorState(g0, G0, F0)


def init_state(problem, x0, S_g, S_dg, S_f, rng):
    """Initial estimates from three fresh with-replacement batches.

    Batches are drawn in the order g, dg, f from ``rng``.
    """
    for name, s in (("S_g", S_g), ("S_dg", S_dg), ("S_f", S_f)):
        if s < 1:
            raise InvalidArgumentError(f"{name} must be >= 1, got {s}")
    bg = core.sample_with_replacement(problem.m, S_g, rng)
    bdg = core.sample_with_replacement(problem.m, S_dg, rng)
    bf = core.sample_with_replacement(problem.n, S_f, rng)
    return init_state_from_batches(problem, x0, bg, bdg, bf)


def update_g(state, problem, x_new, x_old, batch, a_g):
    return storm_recursion(
        state.g_est, _g(problem, x_new, batch), _g(problem, x_old, batch), a_g
    )


def update_G(state, problem, x_new, x_old, batch, a_dg):
    return storm_recursion(
        state.G_est, _jac(problem, x_new, batch), _jac(problem, x_old, batch), a_dg
    )


def update_F(state, problem, g_new, g_old, G_new, G_old, batch, a_phi):
    """F update; must be called with the already-updated ``g_new``/``G_new``."""
    composed_new = G_new.T @ _grad_f(problem, g_new, batch)
    composed_old = G_old.T @ _grad_f(problem, g_old, batch)
    return storm_recursion(state.F_est, composed_new, composed_old, a_phi)


def step_estimators(state, problem, x_new, x_old, batches, momentum):
    """One full estimator step in the required order g, G, then F."""
    bg, bdg, bf = batches
    g_new = update_g(state, problem, x_new, x_old, bg, momentum.a_g)
    G_new = update_G(state, problem, x_new, x_old, bdg, momentum.a_dg)
    F_new = update_F(state, problem, g_new, state.g_est, G_new, state.G_est,
                     bf, momentum.a_phi)
    return EstimatorState(g_new, G_new, F_new)
