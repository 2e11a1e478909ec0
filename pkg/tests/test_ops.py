import numpy as np
import pytest

import wavetrunk.ndgrad as nd
from wavetrunk.ndgrad.gradcheck import check_gradients


def _arr(rng, shape, scale=1.0):
    return nd.Array(rng.standard_normal(shape) * scale, requires_grad=True, dtype=np.float64)


class TestElementwise:
    def test_sigmoid_tanh_fixed_points(self):
        z = nd.Array(np.zeros(3))
        assert nd.sigmoid(z).data == pytest.approx(0.5)
        assert nd.tanh(z).data == pytest.approx(0.0)

    def test_relu(self):
        x = nd.Array(np.array([-1.0, 0.0, 2.0]))
        np.testing.assert_array_equal(nd.relu(x).data, [0.0, 0.0, 2.0])

    def test_shape_mismatch_rejected(self):
        a = nd.Array(np.ones((2, 3)))
        b = nd.Array(np.ones((3, 2)))
        with pytest.raises(ValueError):
            nd.add(a, b)
        with pytest.raises(ValueError):
            nd.mul(a, b)

    def test_sigmoid_gradient_matches_finite_difference(self):
        # spec pins rel err < 1e-6 at x in {-2, 0, 3}
        x = nd.Array(np.array([-2.0, 0.0, 3.0]), requires_grad=True, dtype=np.float64)
        target = np.zeros(3)
        err = check_gradients(lambda: nd.mse_loss(nd.sigmoid(x), target), [x])
        assert err < 1e-6

    def test_elementwise_gradients(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            a = _arr(rng, (3, 4))
            b = _arr(rng, (3, 4))
            target = rng.standard_normal((3, 4))
            for fn in (
                lambda: nd.mse_loss(nd.add(a, b), target),
                lambda: nd.mse_loss(nd.mul(a, b), target),
                lambda: nd.mse_loss(nd.tanh(a), target),
                lambda: nd.mse_loss(nd.scale(a, -1.7), target),
            ):
                assert check_gradients(fn, [a, b]) < 1e-4


class TestCausalDilatedConv:
    def test_identity_kernel(self):
        rng = np.random.default_rng(0)
        x = nd.Array(rng.standard_normal((2, 1, 7)))
        w = nd.Array(np.array([[[1.0]]]))
        b = nd.Array(np.zeros(1))
        out = nd.causal_dilated_conv1d(x, w, b, dilation=1)
        np.testing.assert_array_equal(out.data, x.data)

    def test_unit_delay_taps(self):
        x = nd.Array(np.array([[[1.0, 2.0, 3.0]]]))
        b = nd.Array(np.zeros(1))
        # taps (w_{t-1}=0, w_t=1): reproduces the input
        w_now = nd.Array(np.array([[[0.0, 1.0]]]))
        out = nd.causal_dilated_conv1d(x, w_now, b, dilation=1)
        np.testing.assert_array_equal(out.data[0, 0], [1.0, 2.0, 3.0])
        # taps (w_{t-1}=1, w_t=0): unit delay with zero history
        w_prev = nd.Array(np.array([[[1.0, 0.0]]]))
        out = nd.causal_dilated_conv1d(x, w_prev, b, dilation=1)
        np.testing.assert_array_equal(out.data[0, 0], [0.0, 1.0, 2.0])

    def test_output_length_preserved(self):
        rng = np.random.default_rng(1)
        for dilation in (1, 2, 4, 8):
            for K in (1, 2, 3, 5):
                x = _arr(rng, (1, 2, 11))
                w = _arr(rng, (3, 2, K))
                b = _arr(rng, (3,))
                out = nd.causal_dilated_conv1d(x, w, b, dilation=dilation)
                assert out.shape == (1, 3, 11)

    def test_causality_bit_exact(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((1, 2, 16)).astype(np.float32)
        w = nd.Array(rng.standard_normal((2, 2, 2)).astype(np.float32))
        b = nd.Array(rng.standard_normal(2).astype(np.float32))
        base = nd.causal_dilated_conv1d(nd.Array(x), w, b, dilation=4).data
        for t in (3, 8, 12):
            perturbed = x.copy()
            perturbed[:, :, t + 1 :] += rng.standard_normal(perturbed[:, :, t + 1 :].shape).astype(np.float32)
            out = nd.causal_dilated_conv1d(nd.Array(perturbed), w, b, dilation=4).data
            assert np.array_equal(out[:, :, : t + 1], base[:, :, : t + 1])

    def test_channel_mismatch_rejected(self):
        x = nd.Array(np.ones((1, 3, 5)))
        w = nd.Array(np.ones((2, 4, 2)))
        b = nd.Array(np.zeros(2))
        with pytest.raises(ValueError, match="channels"):
            nd.causal_dilated_conv1d(x, w, b)

    def test_gradient_matches_finite_difference(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            x = _arr(rng, (2, 3, 12))
            w = _arr(rng, (4, 3, 2), scale=0.5)
            b = _arr(rng, (4,), scale=0.1)
            target = rng.standard_normal((2, 4, 12))
            fn = lambda: nd.mse_loss(nd.causal_dilated_conv1d(x, w, b, dilation=4), target)
            assert check_gradients(fn, [x, w, b]) < 1e-4


class TestStridedConv:
    def test_identity_weight_subsamples(self):
        x = nd.Array(np.arange(8.0).reshape(1, 1, 8))
        w = nd.Array(np.ones((1, 1, 1)))
        b = nd.Array(np.zeros(1))
        out = nd.strided_conv1d(x, w, b, stride=2)
        np.testing.assert_array_equal(out.data[0, 0], [0.0, 2.0, 4.0, 6.0])

    def test_output_length_formula(self):
        rng = np.random.default_rng(0)
        x = _arr(rng, (1, 1, 100))
        w = _arr(rng, (1, 1, 100))
        b = _arr(rng, (1,))
        out = nd.strided_conv1d(x, w, b, stride=16)
        assert out.shape[2] == 1

    def test_too_short_rejected(self):
        x = nd.Array(np.ones((1, 1, 4)))
        w = nd.Array(np.ones((1, 1, 5)))
        b = nd.Array(np.zeros(1))
        with pytest.raises(ValueError):
            nd.strided_conv1d(x, w, b, stride=1)

    def test_gradient_matches_finite_difference(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            x = _arr(rng, (2, 3, 17))
            w = _arr(rng, (2, 3, 4), scale=0.5)
            b = _arr(rng, (2,), scale=0.1)
            target = rng.standard_normal((2, 2, 5))
            fn = lambda: nd.mse_loss(nd.strided_conv1d(x, w, b, stride=3), target)
            assert check_gradients(fn, [x, w, b]) < 1e-4


class TestDense:
    def test_identity_weight(self):
        x = nd.Array(np.arange(6.0).reshape(2, 3))
        w = nd.Array(np.eye(3))
        b = nd.Array(np.zeros(3))
        np.testing.assert_array_equal(nd.dense(x, w, b).data, x.data)

    def test_zero_weight_gives_bias(self):
        x = nd.Array(np.ones((4, 3)))
        w = nd.Array(np.zeros((3, 2)))
        b = nd.Array(np.array([1.5, -2.0]))
        out = nd.dense(x, w, b)
        np.testing.assert_array_equal(out.data, np.tile([1.5, -2.0], (4, 1)))

    def test_inner_dim_mismatch_rejected(self):
        with pytest.raises(ValueError, match="inner"):
            nd.dense(nd.Array(np.ones((2, 3))), nd.Array(np.ones((4, 2))), nd.Array(np.zeros(2)))

    def test_gradient_matches_finite_difference(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            x = _arr(rng, (3, 4))
            w = _arr(rng, (4, 2))
            b = _arr(rng, (2,))
            target = rng.standard_normal((3, 2))
            fn = lambda: nd.mse_loss(nd.dense(x, w, b), target)
            assert check_gradients(fn, [x, w, b]) < 1e-4


class TestGlobalAvgPool:
    def test_constant_input(self):
        out = nd.global_avg_pool_time(nd.Array(np.full((2, 3, 5), 1.25)))
        np.testing.assert_allclose(out.data, 1.25)

    def test_time_permutation_invariance(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 3, 10))
        perm = rng.permutation(10)
        a = nd.global_avg_pool_time(nd.Array(x, dtype=np.float64)).data
        b = nd.global_avg_pool_time(nd.Array(x[:, :, perm], dtype=np.float64)).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_simple_mean(self):
        x = nd.Array(np.array([[[1.0, 2.0, 3.0, 4.0]]]))
        assert nd.global_avg_pool_time(x).data[0, 0] == pytest.approx(2.5)

    def test_gradient_distributes_uniformly(self):
        x = nd.Array(np.zeros((1, 1, 4)), requires_grad=True, dtype=np.float64)
        out = nd.global_avg_pool_time(x)
        loss = nd.mse_loss(out, np.array([[1.0]]))  # d loss/d out = -2
        loss.backward()
        np.testing.assert_allclose(x.grad, np.full((1, 1, 4), -0.5))


class TestBatchNorm:
    def test_train_mode_normalizes(self):
        rng = np.random.default_rng(4)
        x = nd.Array(rng.standard_normal((32, 5)) * 3 + 2, dtype=np.float64)
        gamma = nd.Array(np.ones(5), dtype=np.float64)
        beta = nd.Array(np.zeros(5), dtype=np.float64)
        state = nd.BatchNormState.for_channels(5, dtype=np.float64)
        out = nd.batch_norm(x, gamma, beta, state, mode="train").data
        np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-5)
        np.testing.assert_allclose(out.var(axis=0), 1.0, atol=1e-4)

    def test_eval_mode_with_unit_stats_is_identity(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((4, 3))
        gamma = nd.Array(np.ones(3))
        beta = nd.Array(np.zeros(3))
        state = nd.BatchNormState.for_channels(3)
        out = nd.batch_norm(nd.Array(x), gamma, beta, state, mode="eval").data
        np.testing.assert_allclose(out, x, atol=1e-4)

    def test_batch_of_one_rejected_in_train(self):
        x = nd.Array(np.ones((1, 3)))
        gamma = nd.Array(np.ones(3))
        beta = nd.Array(np.zeros(3))
        state = nd.BatchNormState.for_channels(3)
        with pytest.raises(ValueError, match="batch"):
            nd.batch_norm(x, gamma, beta, state, mode="train")

    def test_running_stats_update(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((16, 2)) + 5.0
        gamma = nd.Array(np.ones(2))
        beta = nd.Array(np.zeros(2))
        state = nd.BatchNormState.for_channels(2)
        nd.batch_norm(nd.Array(x), gamma, beta, state, mode="train")
        expected_mean = 0.9 * 0.0 + 0.1 * x.mean(axis=0)
        np.testing.assert_allclose(state.running_mean, expected_mean, rtol=1e-5)

    @pytest.mark.parametrize("shape", [(6, 3), (3, 2, 5)])
    def test_gradient_matches_finite_difference(self, shape):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            x = _arr(rng, shape)
            C = shape[1]
            gamma = nd.Array(rng.uniform(0.5, 1.5, C), requires_grad=True, dtype=np.float64)
            beta = nd.Array(rng.standard_normal(C) * 0.1, requires_grad=True, dtype=np.float64)
            target = rng.standard_normal(shape)

            def fn():
                state = nd.BatchNormState.for_channels(C, dtype=np.float64)
                out = nd.batch_norm(x, gamma, beta, state, mode="train")
                return nd.mse_loss(out, target)

            assert check_gradients(fn, [x, gamma, beta]) < 1e-3


class TestDropout:
    def test_rate_zero_is_identity(self):
        rng = np.random.default_rng(7)
        x = nd.Array(rng.standard_normal((3, 3)))
        for mode in ("train", "eval"):
            out = nd.dropout(x, 0.0, mode=mode, rng=np.random.default_rng(0))
            np.testing.assert_array_equal(out.data, x.data)

    def test_eval_mode_is_identity(self):
        rng = np.random.default_rng(8)
        x = nd.Array(rng.standard_normal((3, 3)))
        out = nd.dropout(x, 0.9, mode="eval")
        np.testing.assert_array_equal(out.data, x.data)

    def test_survivor_fraction(self):
        x = nd.Array(np.ones(1_000_000))
        out = nd.dropout(x, 0.5, mode="train", rng=np.random.default_rng(9))
        survivors = np.count_nonzero(out.data) / x.size
        assert abs(survivors - 0.5) < 0.01
        # survivors are scaled by 1/(1-rate)
        assert out.data.max() == pytest.approx(2.0)

    def test_invalid_rate_rejected(self):
        x = nd.Array(np.ones(4))
        for rate in (1.0, 1.5, -0.1):
            with pytest.raises(ValueError):
                nd.dropout(x, rate, mode="train", rng=np.random.default_rng(0))

    def test_gradient_matches_finite_difference(self):
        rng = np.random.default_rng(10)
        x = _arr(rng, (4, 6))
        target = rng.standard_normal((4, 6))
        fn = lambda: nd.mse_loss(nd.dropout(x, 0.4, mode="train", rng=np.random.default_rng(42)), target)
        assert check_gradients(fn, [x]) < 1e-4


class TestSliceTime:
    def test_values_and_gradient(self):
        x = nd.Array(np.arange(12.0).reshape(1, 2, 6), requires_grad=True, dtype=np.float64)
        out = nd.slice_time(x, 1, 4)
        np.testing.assert_array_equal(out.data, x.data[:, :, 1:4])
        loss = nd.mse_loss(out, np.zeros((1, 2, 3)))
        loss.backward()
        assert np.all(x.grad[:, :, :1] == 0) and np.all(x.grad[:, :, 4:] == 0)
        assert np.any(x.grad[:, :, 1:4] != 0)

    def test_empty_slice_rejected(self):
        x = nd.Array(np.ones((1, 1, 4)))
        with pytest.raises(ValueError):
            nd.slice_time(x, 3, 3)
