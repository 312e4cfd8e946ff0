"""Risk-averse mean-variance portfolio objective as a compositional problem.

    Phi(x) = -(1/T) sum_t <r_t, x> + (1/T) sum_t (<r_t, x> - (1/T) sum_s <r_s, x>)^2

Inner component ``j`` maps ``x`` to ``(x, <r_j, x>)`` so the inner mean is
``(x, mean return)``. Outer component ``i`` is
``-<r_i, u> + (<r_i, u> - v)^2`` evaluated at ``y = (u, v)``.
The variance uses the biased 1/T normalisation.
"""
from __future__ import annotations

import csv

import numpy as np

from ..core import CompositionalProblem, make_rng
from ..exceptions import InvalidProblemError


class PortfolioProblem(CompositionalProblem):
    name = "portfolio"

    def __init__(self, returns):
        R = np.asarray(returns, dtype=np.float64)
        if R.ndim != 2:
            raise InvalidProblemError("returns must be a (T_s, N) matrix")
        if R.shape[0] < 2:
            raise InvalidProblemError(f"need at least 2 return records, got {R.shape[0]}")
        if not np.all(np.isfinite(R)):
            raise InvalidProblemError("returns contain non-finite entries")
        self.returns = R
        self.m = self.n = R.shape[0]
        self.d = R.shape[1]
        self.l = self.d + 1
        self._r_mean = R.mean(axis=0)
        self._cov = np.cov(R, rowvar=False, bias=True).reshape(self.d, self.d)

    def g_components(self, x, idx):
        out = np.empty((len(idx), self.l))
        out[:, : self.d] = x
        out[:, self.d] = self.returns[idx] @ x
        return out

    def jacobian_components(self, x, idx):
        out = np.zeros((len(idx), self.l, self.d))
        out[:, : self.d, :] = np.eye(self.d)
        out[:, self.d, :] = self.returns[idx]
        return out

    def f_components(self, y, idx):
        u, v = y[: self.d], y[self.d]
        ret = self.returns[idx] @ u
        return -ret + (ret - v) ** 2

    def grad_f_components(self, y, idx):
        u, v = y[: self.d], y[self.d]
        r = self.returns[idx]
        dev = r @ u - v
        out = np.empty((len(idx), self.l))
        out[:, : self.d] = r * (2.0 * dev - 1.0)[:, None]
        out[:, self.d] = -2.0 * dev
        return out

    def g_weighted(self, x, idx, w):
        out = np.empty(self.l)
        out[: self.d] = x * w.sum()
        out[self.d] = (w @ self.returns[idx]) @ x
        return out

    def jacobian_weighted(self, x, idx, w):
        out = np.zeros((self.l, self.d))
        out[: self.d, :] = np.eye(self.d) * w.sum()
        out[self.d, :] = w @ self.returns[idx]
        return out

    def grad_f_weighted(self, y, idx, w):
        u, v = y[: self.d], y[self.d]
        r = self.returns[idx]
        dev = r @ u - v
        out = np.empty(self.l)
        out[: self.d] = (w * (2.0 * dev - 1.0)) @ r
        out[self.d] = -2.0 * (w @ dev)
        return out

    def optimal_value(self):
        x_star = self.minimizer
        return float(self.exact_phi(x_star))

    @property
    def minimizer(self):
        # Phi(x) = -<rbar, x> + x^T Cov x, stationary at 2 Cov x = rbar
        return np.linalg.lstsq(2.0 * self._cov, self._r_mean, rcond=None)[0]


def generate_portfolio(T_s, N, condition_number, rng, mean_scale=1.0):
    """Gaussian returns whose covariance has log-spaced eigenvalues in [1, kappa].

    Means are drawn once as ``mean_scale * N(0, 1)`` per asset; the
    eigenbasis is a Haar-random orthogonal matrix. The population
    covariance is kept as ``problem.covariance``.
    """
    if condition_number < 1:
        raise InvalidProblemError("condition_number must be >= 1")
    rng = make_rng(rng)
    eig = np.logspace(0.0, np.log10(condition_number), N)
    Z = rng.standard_normal((N, N))
    Qm, Rm = np.linalg.qr(Z)
    Qm = Qm * np.sign(np.diag(Rm))
    cov = (Qm * eig) @ Qm.T
    mu = mean_scale * rng.standard_normal(N)
    L = Qm * np.sqrt(eig)
    returns = mu + rng.standard_normal((T_s, N)) @ L.T
    problem = PortfolioProblem(returns)
    problem.covariance = cov
    return problem


def portfolio_components(returns):
    return PortfolioProblem(returns)


def load_returns_csv(path):
    """Read a returns matrix: header row of asset names, one record per row."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    R = np.asarray(rows, dtype=np.float64)
    if R.ndim != 2 or R.shape[1] != len(header):
        raise InvalidProblemError(f"{path}: every row needs {len(header)} values")
    return R
