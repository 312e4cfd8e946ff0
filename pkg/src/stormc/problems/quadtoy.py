"""Affine-inner, quadratic-outer toy with a closed-form minimiser.

``g_j(x) = A_j x + b_j`` and ``f_i(y) = 0.5 y^T Q_i y`` with ``Q_i`` PSD, so
``Phi(x) = 0.5 (A x + b)^T Q (A x + b)`` using the component means.
"""
from __future__ import annotations

import numpy as np

from ..core import CompositionalProblem, make_rng
from ..exceptions import InvalidProblemError


class QuadToyProblem(CompositionalProblem):
    name = "quadtoy"

    def __init__(self, A, b, Q):
        A = np.asarray(A, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        Q = np.asarray(Q, dtype=np.float64)
        if A.ndim != 3 or b.shape != A.shape[:2]:
            raise InvalidProblemError("A must be (m, l, d) and b must be (m, l)")
        if Q.ndim != 3 or Q.shape[1:] != (A.shape[1], A.shape[1]):
            raise InvalidProblemError("Q must be (n, l, l)")
        if not np.allclose(Q, np.transpose(Q, (0, 2, 1))):
            raise InvalidProblemError("Q_i must be symmetric")
        self.A, self.b, self.Q = A, b, Q
        self.m, self.l, self.d = A.shape
        self.n = Q.shape[0]
        self.A_mean = A.mean(axis=0)
        self.b_mean = b.mean(axis=0)
        self.Q_mean = Q.mean(axis=0)
        self._minimizer, self._min_value = self._solve()
        self.start = None

    def default_x0(self):
        if self.start is None:
            return np.zeros(self.d)
        return np.array(self.start, dtype=np.float64)

    @classmethod
    def random(cls, d=3, l=4, m=8, n=6, seed=0, noise=0.3):
        """Random instance whose component means define a well-posed quadratic."""
        rng = make_rng(seed)
        base = rng.standard_normal((l, d)) / np.sqrt(d)
        A = base + noise * rng.standard_normal((m, l, d)) / np.sqrt(d)
        b = rng.standard_normal(l) + noise * rng.standard_normal((m, l))
        C = rng.standard_normal((n, l, l)) / np.sqrt(l)
        Q = np.einsum("nij,nkj->nik", C, C) + 0.5 * np.eye(l)
        return cls(A, b, Q)

    @classmethod
    def centered(cls, d=2, m=4, n=4, seed=0, noise_A=0.1, noise_b=0.05, noise_Q=0.1):
        """Near-identity instance with minimiser at the origin and small constants.

        ``A_j = I + noise``, ``b_j`` has zero mean and ``Q_i = I/2 + sym. noise``,
        which keeps the planned batch sizes tractable.
        """
        rng = make_rng(seed)
        A = np.eye(d) + noise_A * rng.standard_normal((m, d, d))
        b = noise_b * rng.standard_normal((m, d))
        b -= b.mean(axis=0)
        E = noise_Q * rng.standard_normal((n, d, d))
        Q = 0.5 * np.eye(d) + 0.5 * (E + np.transpose(E, (0, 2, 1)))
        return cls(A, b, Q)

    def point_with_gap(self, gap, direction=None):
        """Point on the ray ``x* + s u`` whose objective exceeds the minimum by ``gap``."""
        u = np.ones(self.d) if direction is None else np.asarray(direction, dtype=np.float64)
        u = u / np.linalg.norm(u)
        H = self.A_mean.T @ self.Q_mean @ self.A_mean
        curv = float(u @ H @ u)
        if not curv > 0:
            raise InvalidProblemError("objective is flat along the chosen direction")
        return self._minimizer + np.sqrt(2.0 * gap / curv) * u

    def _solve(self):
        H = self.A_mean.T @ self.Q_mean @ self.A_mean
        rhs = -self.A_mean.T @ self.Q_mean @ self.b_mean
        x_star = np.linalg.lstsq(H, rhs, rcond=None)[0]
        return x_star, self.exact_phi(x_star)

    @property
    def minimizer(self):
        return self._minimizer.copy()

    def optimal_value(self):
        return float(self._min_value)

    def g_components(self, x, idx):
        return self.A[idx] @ x + self.b[idx]

    def jacobian_components(self, x, idx):
        return self.A[idx].copy()

    def f_components(self, y, idx):
        return 0.5 * np.einsum("i,nij,j->n", y, self.Q[idx], y)

    def grad_f_components(self, y, idx):
        return self.Q[idx] @ y

    def g_weighted(self, x, idx, w):
        return np.tensordot(w, self.A[idx], axes=1) @ x + w @ self.b[idx]

    def jacobian_weighted(self, x, idx, w):
        return np.tensordot(w, self.A[idx], axes=1)

    def grad_f_weighted(self, y, idx, w):
        return np.tensordot(w, self.Q[idx], axes=1) @ y

    def analytic_constants(self, x0, radius, L_g=0.0):
        """Assumption constants valid on the ball ``||x - x0|| <= radius``.

        The inner maps are affine so ``L_g = 0`` is tight; any larger value
        is also a valid Lipschitz bound and may be passed when a planner
        needs it strictly positive.
        """
        from ..planner import ProblemConstants

        x0 = np.asarray(x0, dtype=np.float64)
        r_x = float(np.linalg.norm(x0) + radius)
        A_norms = np.linalg.norm(self.A, ord=2, axis=(1, 2))
        Q_norms = np.linalg.norm(self.Q, ord=2, axis=(1, 2))
        M_g = float(A_norms.max())
        L_f = float(Q_norms.max())
        y_max = float(np.max(A_norms * r_x + np.linalg.norm(self.b, axis=1)))
        M_f = L_f * y_max

        dQ = self.Q - self.Q_mean
        H1 = float(np.linalg.eigvalsh(np.einsum("nji,njk->ik", dQ, dQ) / self.n).max()) * y_max**2
        dA = self.A - self.A_mean
        db = self.b - self.b_mean
        H2 = float(np.mean(np.sum(dA**2, axis=(1, 2))))
        S = np.einsum("mji,mjk->ik", dA, dA) / self.m
        c = np.einsum("mji,mj->i", dA, db) / self.m
        k = float(np.mean(np.sum(db**2, axis=1)))
        H3 = float(np.linalg.eigvalsh(S).max()) * r_x**2 + 2 * float(np.linalg.norm(c)) * r_x + k
        Delta = float(self.exact_phi(x0) - self._min_value)
        return ProblemConstants(
            Delta=max(Delta, 0.0), L_f=L_f, L_g=float(L_g), M_f=M_f, M_g=M_g,
            H1=H1, H2=H2, H3=H3,
        )
