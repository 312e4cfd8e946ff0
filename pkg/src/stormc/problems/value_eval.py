"""Policy evaluation by Bellman-residual minimisation.

Decision variable ``V`` holds one value per state. Inner component ``j``
returns ``(V, B_j V)`` where ``B_j`` is a one-sample Bellman backup built
from a pre-sampled next-state table: ``(B_j V)_i = R[i, s'] + gamma V[s']``
with ``s' = tables[j, i]``. Outer component ``i`` is
``n (w_i - w_{n+i})^2`` so the outer mean is ``sum_i (w_i - w_{n+i})^2``.

The inner mean is the backup under the empirical kernel of the tables
(``transition_empirical``), which is what makes the problem an exact
finite sum; the exact value function is solved against that kernel.
"""
from __future__ import annotations

import csv

import numpy as np

from ..core import CompositionalProblem, make_rng
from ..exceptions import InvalidProblemError


def _check_stochastic(P):
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise InvalidProblemError("P must be square")
    if np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-12, rtol=0):
        raise InvalidProblemError("P must be row-stochastic")
    return P


class ValueEvalProblem(CompositionalProblem):
    name = "value_eval"

    def __init__(self, P, R, gamma_disc, tables):
        self.P = _check_stochastic(P)
        self.R = np.asarray(R, dtype=np.float64)
        if self.R.shape != self.P.shape:
            raise InvalidProblemError("R must have the shape of P")
        if not 0.0 <= gamma_disc < 1.0:
            raise InvalidProblemError("gamma_disc must lie in [0, 1)")
        tables = np.asarray(tables, dtype=np.int64)
        ns = self.P.shape[0]
        if tables.ndim != 2 or tables.shape[1] != ns:
            raise InvalidProblemError("tables must be (m, n_states)")
        if tables.min() < 0 or tables.max() >= ns:
            raise InvalidProblemError("table entries must be valid state indices")
        self.gamma_disc = float(gamma_disc)
        self.tables = tables
        self.m = tables.shape[0]
        self.n = self.d = ns
        self.l = 2 * ns
        rows = np.arange(ns)
        self._rewards = self.R[rows[None, :], tables]  # (m, ns)
        counts = np.zeros((ns, ns))
        np.add.at(counts, (np.broadcast_to(rows, tables.shape), tables), 1.0)
        self.transition_empirical = counts / self.m

    def _backup(self, V, idx):
        return self._rewards[idx] + self.gamma_disc * V[self.tables[idx]]

    def g_components(self, x, idx):
        out = np.empty((len(idx), self.l))
        out[:, : self.d] = x
        out[:, self.d :] = self._backup(x, idx)
        return out

    def jacobian_components(self, x, idx):
        ns = self.d
        out = np.zeros((len(idx), self.l, ns))
        out[:, :ns, :] = np.eye(ns)
        k = np.repeat(np.arange(len(idx)), ns)
        rows = np.tile(np.arange(ns), len(idx)) + ns
        out[k, rows, self.tables[idx].ravel()] += self.gamma_disc
        return out

    def f_components(self, y, idx):
        return self.n * (y[idx] - y[self.n + idx]) ** 2

    def grad_f_components(self, y, idx):
        out = np.zeros((len(idx), self.l))
        diff = 2.0 * self.n * (y[idx] - y[self.n + idx])
        k = np.arange(len(idx))
        out[k, idx] = diff
        out[k, self.n + idx] = -diff
        return out

    def g_weighted(self, x, idx, w):
        out = np.empty(self.l)
        out[: self.d] = x * w.sum()
        out[self.d :] = w @ self._backup(x, idx)
        return out

    def jacobian_weighted(self, x, idx, w):
        ns = self.d
        out = np.zeros((self.l, ns))
        out[:ns, :] = np.eye(ns) * w.sum()
        rows = np.broadcast_to(np.arange(ns), (len(idx), ns))
        np.add.at(out, (rows + ns, self.tables[idx]), self.gamma_disc * w[:, None])
        return out

    def grad_f_weighted(self, y, idx, w):
        out = np.zeros(self.l)
        diff = 2.0 * self.n * (y[idx] - y[self.n + idx]) * w
        np.add.at(out, idx, diff)
        np.add.at(out, self.n + idx, -diff)
        return out

    def exact_value_function(self):
        """Solve ``(I - gamma P_emp) V = r_emp`` by a direct linear solve."""
        P = self.transition_empirical
        r = self._rewards.mean(axis=0)
        return np.linalg.solve(np.eye(self.d) - self.gamma_disc * P, r)

    def optimal_value(self):
        return 0.0


def value_eval_components(P, R, gamma_disc, n_samples=100, rng=0):
    """Pre-sample ``n_samples`` next-state tables from ``P`` and build the problem."""
    P = _check_stochastic(P)
    rng = make_rng(rng)
    ns = P.shape[0]
    cdf = np.cumsum(P, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random((n_samples, ns))
    tables = np.empty((n_samples, ns), dtype=np.int64)
    for i in range(ns):
        tables[:, i] = np.searchsorted(cdf[i], u[:, i], side="right")
    return ValueEvalProblem(P, R, gamma_disc, np.minimum(tables, ns - 1))


def generate_mdp(n_states, n_actions, rng, gamma_disc=0.95, n_samples=100):
    """Random MDP under a uniform random policy, as a value-evaluation problem.

    Per-action transition rows are Dirichlet(1); the policy-averaged kernel
    is their mean. Rewards are i.i.d. uniform on [0, 1]. The next-state
    tables are drawn from the same generator after the model.
    """
    if n_states < 1:
        raise InvalidProblemError("n_states must be >= 1")
    rng = make_rng(rng)
    P_a = rng.dirichlet(np.ones(n_states), size=(n_actions, n_states))
    P = P_a.mean(axis=0)
    P /= P.sum(axis=1, keepdims=True)
    R = rng.random((n_states, n_states))
    return value_eval_components(P, R, gamma_disc, n_samples=n_samples, rng=rng)


def load_mdp_csv(path):
    """Read ``state,next_state,prob,reward`` records into dense (P, R)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    ns = 1 + max(max(int(r["state"]), int(r["next_state"])) for r in rows)
    P = np.zeros((ns, ns))
    R = np.zeros((ns, ns))
    for r in rows:
        i, j = int(r["state"]), int(r["next_state"])
        P[i, j] = float(r["prob"])
        R[i, j] = float(r["reward"])
    return _check_stochastic(P), R
