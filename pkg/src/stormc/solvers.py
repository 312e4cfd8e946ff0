"""Scikit-learn style wrappers around the STORM-Compositional and SCGD loops.

``fit`` takes a ``CompositionalProblem`` instead of a data matrix; the fitted
solution is exposed as ``coef_`` and the per-iteration trace as ``record_``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import core
from .optimizer import HyperParams, ScgdParams, run_scgd, run_storm_c


def _check_x0(problem, x0):
    if x0 is None:
        return problem.default_x0()
    x0 = check_array(x0, ensure_2d=False, dtype=np.float64).ravel()
    return core.check_point(x0, problem.d, "x0")


class _CompositionalSolver(BaseEstimator):
    def _fit_record(self, record):
        self.record_ = record
        self.coef_ = record.x_hat.copy()
        self.n_iter_ = record.n_iter
        self.ifo_ = int(record.ifo[-1])
        return self

    def score(self, problem):
        """Negative objective at the fitted point (larger is better)."""
        check_is_fitted(self, "coef_")
        return -float(problem.exact_phi(self.coef_))

    def gradient_norm(self, problem):
        check_is_fitted(self, "coef_")
        return float(np.linalg.norm(problem.exact_grad_phi(self.coef_)))


class StormCompositional(_CompositionalSolver):
    """STORM-Compositional with fixed hyperparameters.

    Parameters mirror :class:`stormc.optimizer.HyperParams`; ``random_state``
    must be an integer seed or a numpy ``Generator``.
    """

    def __init__(self, eta=0.1, eps=0.1, a_g=0.01, a_dg=0.01, a_phi=0.01,
                 B_g=100, B_dg=100, B_f=100, S_g=100, S_dg=100, S_f=100, T=100,
                 output_rule="last", cadence=None, full_information=False,
                 random_state=0):
        self.eta = eta
        self.eps = eps
        self.a_g = a_g
        self.a_dg = a_dg
        self.a_phi = a_phi
        self.B_g = B_g
        self.B_dg = B_dg
        self.B_f = B_f
        self.S_g = S_g
        self.S_dg = S_dg
        self.S_f = S_f
        self.T = T
        self.output_rule = output_rule
        self.cadence = cadence
        self.full_information = full_information
        self.random_state = random_state

    @classmethod
    def from_hyperparams(cls, hyper, **kwargs):
        return cls(**hyper.to_dict(), **kwargs)

    def hyperparams(self):
        names = HyperParams.__dataclass_fields__
        return HyperParams(**{k: v for k, v in self.get_params().items() if k in names})

    def fit(self, problem, x0=None):
        core.check_problem(problem)
        seed = self.random_state if isinstance(self.random_state, (int, np.integer)) else None
        record = run_storm_c(problem, self.hyperparams(), core.make_rng(self.random_state),
                             output_rule=self.output_rule, cadence=self.cadence,
                             x0=_check_x0(problem, x0),
                             full_information=self.full_information, seed=seed)
        return self._fit_record(record)


class SCGD(_CompositionalSolver):
    """Two-timescale stochastic compositional gradient descent baseline."""

    def __init__(self, alpha0=0.1, beta0=1.0, alpha_decay=0.75, beta_decay=0.5,
                 B_g=100, B_dg=100, B_f=100, S_g=100, T=100, cadence=None,
                 full_information=False, random_state=0):
        self.alpha0 = alpha0
        self.beta0 = beta0
        self.alpha_decay = alpha_decay
        self.beta_decay = beta_decay
        self.B_g = B_g
        self.B_dg = B_dg
        self.B_f = B_f
        self.S_g = S_g
        self.T = T
        self.cadence = cadence
        self.full_information = full_information
        self.random_state = random_state

    def schedule(self):
        names = ScgdParams.__dataclass_fields__
        return ScgdParams(**{k: v for k, v in self.get_params().items() if k in names})

    def fit(self, problem, x0=None):
        core.check_problem(problem)
        seed = self.random_state if isinstance(self.random_state, (int, np.integer)) else None
        record = run_scgd(problem, self.schedule(), core.make_rng(self.random_state),
                          cadence=self.cadence, x0=_check_x0(problem, x0),
                          full_information=self.full_information, seed=seed)
        return self._fit_record(record)
