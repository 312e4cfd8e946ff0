import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stormc.core import CompositionalProblem
from stormc.problems import QuadToyProblem

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


class ToyProblem(CompositionalProblem):
    """Problem assembled from per-component callables (0-based)."""

    def __init__(self, d, l, gs, jacs, fs, grads):
        self.d, self.l = d, l
        self.m, self.n = len(gs), len(fs)
        self._gs, self._jacs, self._fs, self._grads = gs, jacs, fs, grads

    def g_components(self, x, idx):
        return np.array([np.atleast_1d(self._gs[j](x)) for j in idx], dtype=float)

    def jacobian_components(self, x, idx):
        return np.array([np.atleast_2d(self._jacs[j](x)) for j in idx], dtype=float)

    def f_components(self, y, idx):
        return np.array([float(self._fs[i](y)) for i in idx])

    def grad_f_components(self, y, idx):
        return np.array([np.atleast_1d(self._grads[i](y)) for i in idx], dtype=float)


def scalar_toy(g_slopes, f_kind="identity"):
    """1-d toy with linear g_j(x) = c_j x and a single outer f."""
    gs = [lambda x, c=c: c * x for c in g_slopes]
    jacs = [lambda x, c=c: np.array([[c]]) for c in g_slopes]
    if f_kind == "identity":
        fs, grads = [lambda y: y[0]], [lambda y: np.array([1.0])]
    else:
        fs, grads = [lambda y: y[0] ** 2], [lambda y: np.array([2.0 * y[0]])]
    return ToyProblem(1, 1, gs, jacs, fs, grads)


@pytest.fixture
def quadtoy():
    return QuadToyProblem.random(seed=0)


@pytest.fixture
def centered_toy():
    return QuadToyProblem.centered(seed=0)
