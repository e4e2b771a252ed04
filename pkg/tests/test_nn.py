import numpy as np
import pytest

from xpucost.errors import (
    IdOutOfRangeError,
    SequenceTooShortError,
    ShapeMismatchError,
)
from xpucost.nn import kernels, kernels_np
from xpucost.nn.ops import (
    AdamState,
    adam_step,
    conv1d_backward,
    conv1d_forward,
    dense_forward,
    embedding_backward,
    embedding_forward,
    grad_check,
    maxpool1d_backward,
    maxpool1d_forward,
    mse_loss,
    mse_loss_backward,
    relu,
    relu_backward,
    sgd_step,
)


class TestEmbedding:
    def test_identity_table_row_lookup(self):
        table = np.eye(4)
        out = embedding_forward([0], table)
        assert np.array_equal(out, table[[0]])

    def test_repeated_ids_identical_rows(self):
        table = np.arange(12.0).reshape(4, 3)
        out = embedding_forward([2, 2, 1], table)
        assert np.array_equal(out[0], out[1])

    def test_backward_counts_occurrences(self):
        # loss = sum of outputs -> each table row's grad is its use count
        ids = [1, 1, 4]
        grad = embedding_backward(ids, np.ones((3, 3)), 5)
        assert np.array_equal(grad[1], np.full(3, 2.0))
        assert np.array_equal(grad[4], np.full(3, 1.0))
        assert np.array_equal(grad[0], np.zeros(3))

    def test_out_of_range(self):
        with pytest.raises(IdOutOfRangeError):
            embedding_forward([7], np.zeros((4, 2)))


class TestConv1D:
    def test_averaging_filter(self):
        x = np.array([[1.0], [3.0], [5.0]])
        kernel = np.array([[[0.5, 0.5]]])  # one channel in and out
        out = conv1d_forward(x, kernel, np.zeros(1))
        assert np.allclose(out, [[2.0], [4.0]])

    def test_delta_kernel_is_identity(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((6, 3))
        kernel = np.zeros((3, 3, 2))
        kernel[:, :, 0] = np.eye(3)
        out = conv1d_forward(x, kernel, np.zeros(3))
        assert np.allclose(out, x[:5])

    def test_brute_force_reference(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((7, 2))
        kernel = rng.standard_normal((4, 2, 3))
        bias = rng.standard_normal(4)
        out = conv1d_forward(x, kernel, bias)
        for t in range(5):
            for o in range(4):
                ref = bias[o] + sum(
                    kernel[o, c, j] * x[t + j, c] for j in range(3) for c in range(2)
                )
                assert out[t, o] == pytest.approx(ref)

    def test_output_length_rule(self):
        x = np.zeros((40, 2))
        kernel = np.zeros((2, 2, 2))
        for _ in range(6):
            x = conv1d_forward(x, kernel, np.zeros(2))
        assert x.shape[0] == 34  # six k=2 layers shorten by exactly 6

    def test_too_short(self):
        with pytest.raises(SequenceTooShortError):
            conv1d_forward(np.zeros((1, 2)), np.zeros((2, 2, 2)), np.zeros(2))

    def test_channel_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            conv1d_forward(np.zeros((4, 3)), np.zeros((2, 2, 2)), np.zeros(2))

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((6, 3))
        target = rng.standard_normal((5, 4))

        def lg(params):
            w, b = params
            y = conv1d_forward(x, w, b)
            _, dw, db = conv1d_backward(x, w, mse_loss_backward(y, target))
            return mse_loss(y, target), [dw, db]

        err = grad_check(lg, [rng.standard_normal((4, 3, 2)), rng.standard_normal(4)], eps=1e-4)
        assert err <= 1e-4


class TestMaxPool:
    def test_global(self):
        x = np.array([3.0, 1.0, 4.0, 1.0, 5.0])[:, None]
        assert maxpool1d_forward(x).tolist() == [[5.0]]

    def test_windowed(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])[:, None]
        assert maxpool1d_forward(x, window=2, stride=2).tolist() == [[2.0], [4.0]]

    def test_tie_routes_gradient_to_first(self):
        x = np.array([2.0, 2.0])[:, None]
        dx = maxpool1d_backward(x, np.array([[1.0]]))
        assert dx.tolist() == [[1.0], [0.0]]

    def test_too_short(self):
        with pytest.raises(SequenceTooShortError):
            maxpool1d_forward(np.zeros((3, 1)), window=5)


class TestDenseAndLoss:
    def test_identity_dense(self):
        x = np.array([1.0, -2.0, 3.0])
        assert np.array_equal(dense_forward(x, np.eye(3), np.zeros(3)), x)

    def test_mse_of_itself_is_zero(self):
        x = np.array([1.0, 2.0])
        assert mse_loss(x, x) == 0.0
        assert np.array_equal(mse_loss_backward(x, x), np.zeros(2))

    def test_mse_value(self):
        assert mse_loss(np.array([1.0, 2.0]), np.zeros(2)) == pytest.approx(2.5)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            mse_loss(np.zeros(2), np.zeros(3))
        with pytest.raises(ShapeMismatchError):
            dense_forward(np.zeros(4), np.zeros((2, 3)), np.zeros(2))

    def test_relu_subgradient_zero_at_zero(self):
        x = np.array([-1.0, 0.0, 2.0])
        assert relu(x).tolist() == [0.0, 0.0, 2.0]
        assert relu_backward(x, np.ones(3)).tolist() == [0.0, 0.0, 1.0]


class TestOptimizers:
    def test_sgd_zero_grad_is_identity(self):
        p = [np.array([1.0, 2.0])]
        out = sgd_step(p, [np.zeros(2)], lr=0.5)
        assert np.array_equal(out[0], p[0])

    def test_sgd_unit_lr(self):
        out = sgd_step([np.array([1.0, 2.0])], [np.array([0.5, -1.0])], lr=1.0)
        assert np.allclose(out[0], [0.5, 3.0])

    def test_adam_zero_grad_is_identity(self):
        p = [np.array([3.0])]
        state = AdamState.zeros_like(p)
        out, state = adam_step(p, state, [np.zeros(1)])
        assert np.array_equal(out[0], p[0])
        assert state.t == 1

    def test_adam_first_step_magnitude(self):
        # with g=1 everywhere the bias-corrected first step is lr/(1+eps)
        p = [np.zeros(4)]
        out, _ = adam_step(p, AdamState.zeros_like(p), [np.ones(4)], lr=1e-3)
        assert np.allclose(out[0], -1e-3, rtol=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            sgd_step([np.zeros(2)], [np.zeros(3)], lr=0.1)

    def test_adam_deterministic(self):
        rng = np.random.default_rng(3)
        p = [rng.standard_normal(5)]
        g = [rng.standard_normal(5)]
        a1, s1 = adam_step([p[0].copy()], AdamState.zeros_like(p), g)
        a2, s2 = adam_step([p[0].copy()], AdamState.zeros_like(p), g)
        assert np.array_equal(a1[0], a2[0])


class TestGradCheck:
    def test_quadratic_is_nearly_exact(self):
        a = np.array([2.0, -3.0, 0.5])

        def lg(params):
            (x,) = params
            return float(np.sum(a * x * x)), [2 * a * x]

        err = grad_check(lg, [np.array([1.0, 2.0, -1.0])], eps=1e-4)
        assert err <= 1e-6

    def test_detects_wrong_gradient(self):
        def lg(params):
            (x,) = params
            return float(np.sum(x * x)), [3.1 * x]  # deliberately wrong

        assert grad_check(lg, [np.array([1.0, 2.0])], eps=1e-4) > 0.1


HAS_CYTHON = kernels.BACKEND == "cython"


@pytest.mark.skipif(not HAS_CYTHON, reason="compiled kernels not built")
class TestBackendParity:
    """The compiled extension and the numpy fallback agree to roundoff."""

    @pytest.mark.parametrize("shape,k", [((1, 3, 1), 1), ((2, 8, 3), 2), ((4, 9, 5), 3), ((3, 5, 2), 5)])
    def test_conv(self, shape, k):
        rng = np.random.default_rng(hash((shape, k)) % 2**32)
        x = rng.standard_normal(shape)
        w = rng.standard_normal((4, shape[2], k))
        b = rng.standard_normal(4)
        y1 = kernels.conv1d_fwd(x, w, b)
        y2 = kernels_np.conv1d_fwd(x, w, b)
        assert np.allclose(y1, y2, atol=1e-12)
        dy = rng.standard_normal(y1.shape)
        for a, bb in zip(kernels.conv1d_bwd(x, w, dy), kernels_np.conv1d_bwd(x, w, dy)):
            assert np.allclose(a, bb, atol=1e-11)

    def test_dense(self):
        rng = np.random.default_rng(7)
        x, w, b = rng.standard_normal((6, 11)), rng.standard_normal((4, 11)), rng.standard_normal(4)
        assert np.allclose(kernels.dense_fwd(x, w, b), kernels_np.dense_fwd(x, w, b), atol=1e-12)
        dy = rng.standard_normal((6, 4))
        for a, bb in zip(kernels.dense_bwd(x, w, dy), kernels_np.dense_bwd(x, w, dy)):
            assert np.allclose(a, bb, atol=1e-12)

    @pytest.mark.parametrize("window,stride", [(1, 1), (3, 2), (10, 10), (4, 1)])
    def test_maxpool(self, window, stride):
        rng = np.random.default_rng(window * 10 + stride)
        x = rng.standard_normal((3, 10, 4))
        y1, p1 = kernels.maxpool1d_fwd(x, window, stride)
        y2, p2 = kernels_np.maxpool1d_fwd(x, window, stride)
        assert np.array_equal(p1, p2)
        assert np.allclose(y1, y2, atol=0)
        dy = rng.standard_normal(y1.shape)
        assert np.allclose(
            kernels.maxpool1d_bwd(dy, p1, 10), kernels_np.maxpool1d_bwd(dy, p2, 10), atol=0
        )

    def test_embedding(self):
        rng = np.random.default_rng(8)
        ids = rng.integers(0, 12, size=(4, 9))
        table = rng.standard_normal((12, 5))
        assert np.allclose(
            kernels.embedding_fwd(ids, table), kernels_np.embedding_fwd(ids, table), atol=0
        )
        dy = rng.standard_normal((4, 9, 5))
        assert np.allclose(
            kernels.embedding_bwd(ids, dy, 12), kernels_np.embedding_bwd(ids, dy, 12), atol=1e-12
        )
