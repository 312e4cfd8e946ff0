"""Stochastic neighbour embedding in compositional form.

Embeddings ``x_1..x_n`` in R^d are flattened row-wise into ``x`` of length
``d*n``. With ``E_ik = exp(-||x_i - x_k||^2)``:

    g_i(x) = [x_1, ..., x_n, n E_i1 - 1, ..., n E_in - 1]       (length dn + n)
    f_j(y) = n sum_i p_{j|i} (||y_i - y_j||^2 + log y_{n+i})

``p[i, j]`` stores ``p_{j|i}`` (rows sum to one, zero diagonal).
"""
from __future__ import annotations

import numpy as np

from ..core import CompositionalProblem, make_rng
from ..exceptions import DomainViolationError, InvalidProblemError


def sne_similarities(z, sigmas):
    """Conditional similarities ``p[i, j] = p_{j|i}`` with self-similarity zero."""
    z = np.asarray(z, dtype=np.float64)
    sigmas = np.broadcast_to(np.asarray(sigmas, dtype=np.float64), (z.shape[0],))
    if z.shape[0] < 2:
        raise InvalidProblemError("need at least two points")
    if np.any(sigmas <= 0):
        raise InvalidProblemError("bandwidths must be positive")
    sq = np.sum((z[:, None, :] - z[None, :, :]) ** 2, axis=-1)
    logits = -sq / (2.0 * sigmas[:, None] ** 2)
    np.fill_diagonal(logits, -np.inf)
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=1, keepdims=True)


class SneProblem(CompositionalProblem):
    name = "sne"

    def __init__(self, p, d=2, x0_scale=1e-2, seed=0):
        p = np.asarray(p, dtype=np.float64)
        npts = p.shape[0]
        if p.shape != (npts, npts) or npts < 2:
            raise InvalidProblemError("p must be square with n >= 2")
        if np.any(p < 0) or np.any(np.diag(p) != 0):
            raise InvalidProblemError("p must be nonnegative with zero diagonal")
        if not np.allclose(p.sum(axis=1), 1.0, atol=1e-12, rtol=0):
            raise InvalidProblemError("rows of p must sum to one")
        if d < 1:
            raise InvalidProblemError("embedding dimension must be >= 1")
        self.p = p
        self.npts = npts
        self.emb_dim = int(d)
        self.m = self.n = npts
        self.d = npts * self.emb_dim
        self.l = self.d + npts
        self._x0 = x0_scale * make_rng(seed).standard_normal(self.d)

    def default_x0(self):
        return self._x0.copy()

    def _points(self, x):
        return np.asarray(x).reshape(self.npts, self.emb_dim)

    def _kernel(self, X, idx):
        # E[r, k] = exp(-||x_k - x_{idx[r]}||^2)
        diff = X[None, :, :] - X[idx][:, None, :]
        return np.exp(-np.sum(diff**2, axis=-1)), diff

    def g_components(self, x, idx):
        E, _ = self._kernel(self._points(x), idx)
        out = np.empty((len(idx), self.l))
        out[:, : self.d] = x
        out[:, self.d :] = self.npts * E - 1.0
        return out

    def g_weighted(self, x, idx, w):
        E, _ = self._kernel(self._points(x), idx)
        out = np.empty(self.l)
        out[: self.d] = x * w.sum()
        out[self.d :] = w @ (self.npts * E - 1.0)
        return out

    def _tail_jacobian(self, x, idx, w):
        """Weighted tail block as an (n, n, d) array: row k, column block l."""
        npts = self.npts
        E, diff = self._kernel(self._points(x), idx)  # diff[r, k] = x_k - x_i
        coef = 2.0 * npts * E[:, :, None] * diff  # (r, k, d)
        tail = np.zeros((npts, npts, self.emb_dim))
        # d/dx_k of g_{i,n+k} = -coef; d/dx_i of g_{i,n+k} = +coef
        ks = np.arange(npts)
        tail[ks, ks, :] -= np.tensordot(w, coef, axes=1)
        for r, i in enumerate(idx):
            tail[:, i, :] += w[r] * coef[r]
        return tail

    def jacobian_components(self, x, idx):
        out = np.zeros((len(idx), self.l, self.d))
        for r, i in enumerate(idx):
            out[r] = self.jacobian_weighted(x, np.array([i]), np.array([1.0]))
        return out

    def jacobian_weighted(self, x, idx, w):
        out = np.zeros((self.l, self.d))
        out[: self.d, :] = np.eye(self.d) * w.sum()
        out[self.d :, :] = self._tail_jacobian(x, idx, w).reshape(self.npts, self.d)
        return out

    def _split(self, y):
        Y = np.asarray(y[: self.d]).reshape(self.npts, self.emb_dim)
        t = np.asarray(y[self.d :])
        bad = np.flatnonzero(t <= 0)
        if bad.size:
            raise DomainViolationError(
                f"log argument y[n+{bad[0] + 1}] = {t[bad[0]]:.3g} is not positive",
                index=int(bad[0]) + 1,
            )
        return Y, t

    def f_components(self, y, idx):
        Y, t = self._split(y)
        sq = np.sum((Y[:, None, :] - Y[None, idx, :]) ** 2, axis=-1)  # (i, r)
        return self.npts * np.sum(self.p[:, idx] * (sq + np.log(t)[:, None]), axis=0)

    def _grad_f_blocks(self, Y, t, idx, w):
        npts = self.npts
        pw = self.p[:, idx] * w  # (i, r)
        diff = Y[:, None, :] - Y[None, idx, :]  # (l, r, d) = y_l - y_j
        g1 = 2.0 * npts * np.einsum("lr,lrd->ld", pw, diff)
        # the j-block collects -2n sum_k p_{j|k}(y_k - y_j)
        np.add.at(g1, idx, -2.0 * npts * np.einsum("kr,krd->rd", pw, diff))
        g2 = npts * pw.sum(axis=1) / t
        return g1, g2

    def grad_f_components(self, y, idx):
        Y, t = self._split(y)
        out = np.empty((len(idx), self.l))
        for r, j in enumerate(idx):
            g1, g2 = self._grad_f_blocks(Y, t, np.array([j]), np.array([1.0]))
            out[r, : self.d] = g1.ravel()
            out[r, self.d :] = g2
        return out

    def grad_f_weighted(self, y, idx, w):
        Y, t = self._split(y)
        g1, g2 = self._grad_f_blocks(Y, t, idx, w)
        return np.concatenate([g1.ravel(), g2])

    def composed_component_gradient(self, x, y, i, j):
        """``(dg_i(x))^T grad f_j(y)`` assembled from the sparse block structure.

        Block ``l != i`` gets ``grad f_{j,l} - 2n E_il (x_l - x_i) df/dy_{n+l}``;
        block ``i`` gets ``grad f_{j,i} + sum_k 2n E_ik (x_k - x_i) df/dy_{n+k}``.
        ``i`` and ``j`` are 0-based.
        """
        Y, t = self._split(y)
        X = self._points(x)
        g1, g2 = self._grad_f_blocks(Y, t, np.array([j]), np.array([1.0]))
        E, diff = self._kernel(X, np.array([i]))
        coef = 2.0 * self.npts * E[0][:, None] * diff[0]  # (k, d)
        out = g1 - coef * g2[:, None]
        out[i] += coef.T @ g2
        return out.ravel()

    def exact_grad_phi(self, x):
        X = self._points(x)
        y = self.exact_g(x)
        v = self.exact_grad_f(y)
        v1 = v[: self.d].reshape(self.npts, self.emb_dim)
        v2 = v[self.d :]
        E, diff = self._kernel(X, np.arange(self.npts))  # diff[l, k] = x_k - x_l
        grad = v1 + 2.0 * np.einsum("lk,lkd->ld", E * (v2[:, None] + v2[None, :]), diff)
        return grad.ravel()

    def kl_objective(self, x):
        """``sum_i sum_{j != i} p_{j|i} log(p_{j|i} / q_{j|i})``.

        ``q_{j|i}`` uses the kernel ``exp(-||x_i - x_j||^2)``, the one that
        matches the compositional form, so this differs from ``exact_phi``
        by the constant ``sum p log p``.
        """
        X = self._points(x)
        sq = np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=-1)
        logits = -sq
        np.fill_diagonal(logits, -np.inf)
        mx = logits.max(axis=1, keepdims=True)
        logq = logits - mx - np.log(np.exp(logits - mx).sum(axis=1, keepdims=True))
        mask = self.p > 0
        return float(np.sum(self.p[mask] * (np.log(self.p[mask]) - logq[mask])))


def sne_components(p, d=2, **kwargs):
    return SneProblem(p, d=d, **kwargs)


def generate_sne(n_points, ambient_dim, rng, d=2, sigma=1.0, n_clusters=3):
    """Clustered Gaussian data in R^N and its SNE problem (data kept as ``.data``)."""
    rng = make_rng(rng)
    centers = 3.0 * rng.standard_normal((n_clusters, ambient_dim))
    labels = rng.integers(0, n_clusters, size=n_points)
    z = centers[labels] + rng.standard_normal((n_points, ambient_dim))
    sigmas = sigma * np.sqrt(ambient_dim) * np.ones(n_points)
    p = sne_similarities(z, sigmas)
    problem = SneProblem(p, d=d, seed=rng)
    problem.data = z
    return problem
