import numpy as np
import pytest

from stormc import core
from stormc.core import IndexBatch, sample_with_replacement
from stormc.exceptions import InvalidArgumentError, InvalidProblemError

from conftest import scalar_toy
from oracles import loop_mean_g, loop_mean_grad_f, loop_mean_jacobian, loop_phi


def batch(indices, pool):
    return IndexBatch.from_one_based(indices, pool)


class TestSampling:
    def test_zero_size_batch_is_empty(self):
        b = sample_with_replacement(5, 0, np.random.default_rng(0))
        assert len(b) == 0 and b.pool_size == 5

    def test_single_element_pool_repeats(self):
        b = sample_with_replacement(1, 3, np.random.default_rng(0))
        assert b.one_based() == [1, 1, 1]

    def test_same_seed_same_batch(self):
        a = sample_with_replacement(10, 4, core.make_rng(42))
        b = sample_with_replacement(10, 4, core.make_rng(42))
        assert a.one_based() == b.one_based()

    def test_indices_in_range(self):
        b = sample_with_replacement(7, 500, np.random.default_rng(3))
        assert min(b.one_based()) >= 1 and max(b.one_based()) <= 7
        assert len(b) == 500

    def test_empty_pool_rejected(self):
        with pytest.raises(InvalidProblemError):
            sample_with_replacement(0, 3, np.random.default_rng(0))

    def test_negative_batch_rejected(self):
        with pytest.raises(InvalidArgumentError):
            sample_with_replacement(3, -1, np.random.default_rng(0))

    def test_stream_is_reproducible(self):
        def stream(seed):
            rng = core.make_rng(seed)
            return [sample_with_replacement(9, 5, rng).one_based() for _ in range(20)]

        assert stream(11) == stream(11)
        assert stream(11) != stream(12)

    def test_one_based_roundtrip(self):
        b = batch([3, 1, 3], 4)
        assert list(b.indices) == [2, 0, 2]
        assert b.one_based() == [3, 1, 3]

    def test_out_of_range_one_based_rejected(self):
        with pytest.raises(InvalidArgumentError):
            batch([0, 1], 3)
        with pytest.raises(InvalidArgumentError):
            batch([4], 3)

    def test_missing_seed_rejected(self):
        with pytest.raises(InvalidArgumentError):
            core.make_rng(None)


class TestMinibatchMeans:
    def test_two_component_mean(self):
        problem = scalar_toy([1.0, 2.0])
        out = core.minibatch_g(problem, np.array([1.0]), batch([1, 2], 2))
        np.testing.assert_array_equal(out, [1.5])

    def test_repeated_index_equals_component(self, quadtoy):
        x = np.array([0.3, -1.0, 2.0])
        out = core.minibatch_g(quadtoy, x, batch([4, 4, 4], quadtoy.m))
        np.testing.assert_allclose(out, quadtoy.g_components(x, [3])[0], rtol=0, atol=1e-14)

    def test_singleton_jacobian(self, quadtoy):
        x = np.ones(3)
        out = core.minibatch_jacobian(quadtoy, x, batch([2], quadtoy.m))
        np.testing.assert_array_equal(out, quadtoy.A[1])

    def test_duplicated_jacobian_hand_sum(self):
        problem = scalar_toy([1.5, -4.0])
        out = core.minibatch_jacobian(problem, np.array([0.0]), batch([1, 1, 2], 2))
        np.testing.assert_allclose(out, [[(2 * 1.5 - 4.0) / 3]], rtol=1e-15)

    def test_duplicated_grad_f_hand_sum(self, quadtoy):
        y = np.arange(quadtoy.l, dtype=float)
        out = core.minibatch_grad_f(quadtoy, y, batch([1, 1, 2], quadtoy.n))
        expected = (2 * quadtoy.Q[0] @ y + quadtoy.Q[1] @ y) / 3
        np.testing.assert_allclose(out, expected, rtol=1e-13)

    def test_full_batch_equals_exact(self, quadtoy):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(quadtoy.d)
        y = rng.standard_normal(quadtoy.l)
        full_m, full_n = IndexBatch.full(quadtoy.m), IndexBatch.full(quadtoy.n)
        np.testing.assert_array_equal(core.minibatch_g(quadtoy, x, full_m), quadtoy.exact_g(x))
        np.testing.assert_array_equal(core.minibatch_jacobian(quadtoy, x, full_m),
                                      quadtoy.exact_jacobian(x))
        np.testing.assert_array_equal(core.minibatch_grad_f(quadtoy, y, full_n),
                                      quadtoy.exact_grad_f(y))

    @pytest.mark.parametrize("seed", range(5))
    def test_random_batch_matches_loop(self, quadtoy, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(quadtoy.d)
        y = rng.standard_normal(quadtoy.l)
        bm = sample_with_replacement(quadtoy.m, 13, rng)
        bn = sample_with_replacement(quadtoy.n, 9, rng)
        np.testing.assert_allclose(core.minibatch_g(quadtoy, x, bm),
                                   loop_mean_g(quadtoy, x, bm.indices), rtol=0, atol=1e-12)
        np.testing.assert_allclose(core.minibatch_jacobian(quadtoy, x, bm),
                                   loop_mean_jacobian(quadtoy, x, bm.indices), rtol=0, atol=1e-12)
        np.testing.assert_allclose(core.minibatch_grad_f(quadtoy, y, bn),
                                   loop_mean_grad_f(quadtoy, y, bn.indices), rtol=0, atol=1e-12)

    def test_empty_batch_rejected(self, quadtoy):
        empty = IndexBatch(np.array([], dtype=np.int64), quadtoy.m)
        with pytest.raises(InvalidArgumentError):
            core.minibatch_g(quadtoy, np.zeros(3), empty)

    def test_pool_mismatch_rejected(self, quadtoy):
        with pytest.raises(InvalidArgumentError):
            core.minibatch_g(quadtoy, np.zeros(3), batch([1], quadtoy.m + 1))


class TestExact:
    def test_single_component(self):
        problem = scalar_toy([2.5])
        np.testing.assert_array_equal(problem.exact_g(np.array([2.0])), [5.0])

    def test_quadtoy_closed_form_vs_loop(self, quadtoy):
        x = np.array([0.5, -0.2, 1.1])
        closed = quadtoy.A_mean @ x + quadtoy.b_mean
        np.testing.assert_allclose(quadtoy.exact_g(x), closed, rtol=0, atol=1e-12)
        np.testing.assert_allclose(quadtoy.exact_g(x), loop_mean_g(quadtoy, x, range(quadtoy.m)),
                                   rtol=0, atol=1e-12)
        assert quadtoy.exact_phi(x) == pytest.approx(loop_phi(quadtoy, x), abs=1e-12)

    def test_linearity(self):
        problem = scalar_toy([1.0, 3.0, -2.0])
        x = np.array([0.7])
        np.testing.assert_allclose(problem.exact_g(2 * x), 2 * problem.exact_g(x), rtol=1e-15)

    def test_scalar_chain_rule(self):
        problem = scalar_toy([3.0])
        for x in (-2.0, 0.0, 5.0):
            np.testing.assert_array_equal(problem.exact_grad_phi(np.array([x])), [3.0])

    def test_square_of_identity(self):
        problem = scalar_toy([1.0], f_kind="square")
        assert problem.exact_phi(np.array([2.0])) == 4.0

    def test_homogeneous_scaling(self):
        problem = scalar_toy([1.0, 2.0], f_kind="square")
        x = np.array([0.9])
        assert problem.exact_phi(3 * x) == pytest.approx(9 * problem.exact_phi(x), rel=1e-14)

    def test_stationary_point(self, quadtoy):
        np.testing.assert_allclose(quadtoy.exact_grad_phi(quadtoy.minimizer), 0.0, atol=1e-10)

    def test_minimum_value(self, quadtoy):
        assert quadtoy.exact_phi(quadtoy.minimizer) == pytest.approx(quadtoy.optimal_value(),
                                                                     abs=1e-14)
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = quadtoy.minimizer + rng.standard_normal(quadtoy.d)
            assert quadtoy.exact_phi(x) >= quadtoy.optimal_value()

    def test_module_level_helpers(self, quadtoy):
        x = np.ones(3)
        np.testing.assert_array_equal(core.exact_grad_phi(quadtoy, x), quadtoy.exact_grad_phi(x))
        assert core.exact_phi(quadtoy, x) == quadtoy.exact_phi(x)

    def test_wrong_dimension_rejected(self, quadtoy):
        with pytest.raises(InvalidArgumentError):
            core.exact_grad_phi(quadtoy, np.ones(4))
        with pytest.raises(InvalidArgumentError):
            core.minibatch_g(quadtoy, np.ones(2), batch([1], quadtoy.m))
