"""Problem oracles, with-replacement sampling and minibatch/exact means.

A compositional problem minimises ``Phi(x) = f(g(x))`` where
``g = mean_j g_j`` (``m`` inner components mapping R^d -> R^l) and
``f = mean_i f_i`` (``n`` outer components mapping R^l -> R).

Indices are stored 0-based in numpy arrays and exposed 1-based through
:meth:`IndexBatch.one_based` for serialization.
"""
from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError, InvalidProblemError


def make_rng(seed):
    """Return a PCG64 generator; an existing Generator is passed through."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise InvalidArgumentError("an explicit integer seed is required")
    return np.random.default_rng(int(seed))


@dataclass(frozen=True)
class IndexBatch:
    """A with-replacement minibatch drawn from ``{0, ..., pool_size - 1}``."""

    indices: np.ndarray
    pool_size: int

    def __len__(self):
        return int(self.indices.shape[0])

    def one_based(self):
        return [int(i) + 1 for i in self.indices]

    @classmethod
    def full(cls, pool_size):
        """Enumeration batch containing every index exactly once."""
        return cls(np.arange(pool_size, dtype=np.int64), int(pool_size))

    @classmethod
    def from_one_based(cls, indices, pool_size):
        idx = np.asarray(indices, dtype=np.int64) - 1
        if idx.size and (idx.min() < 0 or idx.max() >= pool_size):
            raise InvalidArgumentError(f"indices must lie in [1, {pool_size}]")
        return cls(idx, int(pool_size))


def sample_with_replacement(pool_size, batch_size, rng):
    """Draw ``batch_size`` i.i.d. uniform indices from a pool of ``pool_size``."""
    if pool_size < 1:
        raise InvalidProblemError("cannot sample from an empty pool")
    if batch_size < 0:
        raise InvalidArgumentError(f"batch_size must be >= 0, got {batch_size}")
    idx = rng.integers(0, pool_size, size=int(batch_size), dtype=np.int64)
    return IndexBatch(idx, int(pool_size))


def _weights(batch, pool_size):
    """Collapse a batch into (unique indices, multiplicity / |batch|)."""
    if len(batch) == 0:
        raise InvalidArgumentError("empty minibatch")
    if batch.pool_size != pool_size:
        raise InvalidArgumentError(
            f"batch drawn from pool of {batch.pool_size}, expected {pool_size}"
        )
    counts = np.bincount(batch.indices, minlength=pool_size)
    uniq = np.flatnonzero(counts)
    return uniq, counts[uniq] / float(len(batch))


class CompositionalProblem(abc.ABC):
    """Finite-sum compositional oracle.

    Subclasses set ``d, l, m, n`` and implement the four vectorised
    component evaluators; each takes an integer array ``idx`` of 0-based
    component indices and returns one row per index. Exact means default to
    averaging every component and may be overridden with closed forms.
    """

    d: int
    l: int
    m: int
    n: int

    @abc.abstractmethod
    def g_components(self, x, idx):
        """Rows ``g_j(x)`` for ``j in idx``; shape ``(len(idx), l)``."""

    @abc.abstractmethod
    def jacobian_components(self, x, idx):
        """Jacobians of ``g_j`` at ``x``; shape ``(len(idx), l, d)``."""

    @abc.abstractmethod
    def f_components(self, y, idx):
        """Values ``f_i(y)``; shape ``(len(idx),)``."""

    @abc.abstractmethod
    def grad_f_components(self, y, idx):
        """Gradients of ``f_i`` at ``y``; shape ``(len(idx), l)``."""

    # weighted means; overridden where a structured reduction is cheaper
    def g_weighted(self, x, idx, w):
        return w @ self.g_components(x, idx)

    def jacobian_weighted(self, x, idx, w):
        return np.tensordot(w, self.jacobian_components(x, idx), axes=1)

    def grad_f_weighted(self, y, idx, w):
        return w @ self.grad_f_components(y, idx)

    def exact_g(self, x):
        return self.g_weighted(x, np.arange(self.m), np.full(self.m, 1.0 / self.m))

    def exact_jacobian(self, x):
        return self.jacobian_weighted(
            x, np.arange(self.m), np.full(self.m, 1.0 / self.m)
        )

    def exact_f(self, y):
        return float(np.mean(self.f_components(y, np.arange(self.n))))

    def exact_grad_f(self, y):
        return self.grad_f_weighted(
            y, np.arange(self.n), np.full(self.n, 1.0 / self.n)
        )

    def exact_phi(self, x):
        return self.exact_f(self.exact_g(x))

    def exact_grad_phi(self, x):
        return self.exact_jacobian(x).T @ self.exact_grad_f(self.exact_g(x))

    def optimal_value(self):
        """Known ``min Phi`` or ``None`` when unavailable."""
        return None

    def default_x0(self):
        return np.zeros(self.d)

    @property
    def name(self):
        return type(self).__name__


def check_problem(problem):
    """Validate the dimension bookkeeping of a problem oracle."""
    if not isinstance(problem, CompositionalProblem):
        raise InvalidProblemError(
            f"expected a CompositionalProblem, got {type(problem).__name__}"
        )
    for attr in ("d", "l", "m", "n"):
        value = getattr(problem, attr, None)
        if not isinstance(value, (int, np.integer)) or value < 1:
            raise InvalidProblemError(f"problem.{attr} must be a positive int")
    return problem


def check_point(x, dim, what="x", finite=True):
    """Return ``x`` as a float64 vector of length ``dim`` (finite unless told otherwise)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != dim:
        raise InvalidArgumentError(f"{what} must have shape ({dim},), got {arr.shape}")
    if finite and not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{what} contains non-finite entries")
    return arr


def minibatch_g(problem, x, batch):
    """Mean of ``g_j(x)`` over the batch, duplicates counted."""
    idx, w = _weights(batch, problem.m)
    return problem.g_weighted(check_point(x, problem.d, finite=False), idx, w)


def minibatch_jacobian(problem, x, batch):
    idx, w = _weights(batch, problem.m)
    return problem.jacobian_weighted(check_point(x, problem.d, finite=False), idx, w)


def minibatch_grad_f(problem, y, batch):
    idx, w = _weights(batch, problem.n)
    return problem.grad_f_weighted(check_point(y, problem.l, "y", finite=False), idx, w)


def exact_g(problem, x):
    return problem.exact_g(check_point(x, problem.d))


def exact_jacobian(problem, x):
    return problem.exact_jacobian(check_point(x, problem.d))


def exact_grad_f(problem, y):
    return problem.exact_grad_f(check_point(y, problem.l, "y"))


def exact_phi(problem, x):
    return problem.exact_phi(check_point(x, problem.d))


def exact_grad_phi(problem, x):
    """Compositional gradient ``(dg(x))^T grad f(g(x))``."""
    return problem.exact_grad_phi(check_point(x, problem.d))
