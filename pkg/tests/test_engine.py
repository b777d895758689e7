import numpy as np
import numpy.testing as npt
import pytest

from core.engine import functional as fn
from core.engine.init import kaiming_gain, kaiming_init
from core.engine.layers import BatchNorm1d, Conv1d, Dropout, Linear
from core.engine.optim import Adam, AdamState, adam_step
from core.engine.rng import Rng
from core.engine.tensor import Parameter, Tensor, no_grad
from core.errors import GraphError, ShapeError, StatisticsError, TargetError


class TestTensor:
    def test_product_rule(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True, dtype=np.float64)
        (x * x).sum().backward()
        npt.assert_array_equal(x.grad, [2.0, 4.0, 6.0])

    def test_gradients_accumulate_on_leaves(self):
        x = Tensor([1.0, -2.0], requires_grad=True, dtype=np.float64)
        (x * 3.0).sum().backward()
        (x * 2.0).sum().backward()
        npt.assert_array_equal(x.grad, [5.0, 5.0])

    def test_second_backward_on_same_graph_fails(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        loss = (x * x).sum()
        loss.backward()
        with pytest.raises(GraphError):
            loss.backward()

    def test_backward_needs_scalar(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(GraphError):
            (x * 2.0).backward()

    def test_only_scalar_broadcasting(self):
        a = Tensor(np.ones((2, 3)))
        with pytest.raises(ShapeError):
            a + Tensor(np.ones(3))
        npt.assert_array_equal((a + 1.0).numpy(), np.full((2, 3), 2.0))

    def test_no_grad_records_nothing(self):
        x = Tensor([1.0], requires_grad=True)
        with no_grad():
            y = x * 2.0
        assert not y.requires_grad

    def test_float32_default(self):
        assert Tensor([1, 2, 3]).dtype == np.float32


class TestFunctional:
    def test_conv1d_stride_formula(self, rng):
        x = Tensor(rng.normal((2, 3, 300)))
        w = Tensor(rng.normal((9, 3, 9)))
        assert fn.conv1d(x, w, stride=4).shape == (2, 9, 73)

    @pytest.mark.parametrize("signal, kernel, dilation, expected", [
        ([1.0, 2.0, 3.0, 4.0], [1.0, 0.0, -1.0], 1, [-2.0, -2.0]),
        ([5.0, 7.0], [1.0], 1, [5.0, 7.0]),
        ([1.0, 2.0, 3.0, 4.0], [1.0, 1.0], 2, [4.0, 6.0]),
    ])
    def test_conv1d_is_cross_correlation(self, signal, kernel, dilation, expected):
        x = Tensor(np.array(signal).reshape(1, 1, -1), dtype=np.float64)
        w = Tensor(np.array(kernel).reshape(1, 1, -1), dtype=np.float64)
        npt.assert_array_equal(fn.conv1d(x, w, dilation=dilation).numpy().ravel(), expected)

    def test_conv2d_dilated_causal_padding_keeps_extent(self, rng):
        x = Tensor(rng.normal((1, 4, 3, 20)))
        w = Tensor(rng.normal((5, 4, 3, 3)))
        padded = fn.pad2d(x, (1, 1, 8, 0))
        assert fn.conv2d(padded, w, dilation=(1, 4)).shape == (1, 5, 3, 20)

    def test_conv2d_channel_mismatch_names_shapes(self, rng):
        x = Tensor(rng.normal((1, 4, 3, 20)))
        w = Tensor(rng.normal((5, 2, 3, 3)))
        with pytest.raises(ShapeError, match="4"):
            fn.conv2d(x, w)

    def test_linear_matches_numpy(self, rng):
        x, w, b = rng.normal((3, 4)), rng.normal((2, 4)), rng.normal(2)
        out = fn.linear(Tensor(x), Tensor(w), Tensor(b))
        npt.assert_allclose(out.numpy(), x @ w.T + b, rtol=1e-6)

    def test_leaky_relu_gradient_at_zero_uses_slope(self):
        x = Tensor([0.0, 2.0, -2.0], requires_grad=True)
        fn.leaky_relu(x, 0.1).sum().backward()
        npt.assert_allclose(x.grad, [0.1, 1.0, 0.1])

    def test_dropout_identity_in_eval(self, rng):
        x = Tensor(rng.normal((4, 5)))
        assert fn.dropout(x, 0.5, training=False) is x

    def test_dropout_inverted_scaling(self):
        x = Tensor(np.ones((50, 50)))
        out = fn.dropout(x, 0.5, training=True, rng=Rng(3, "mask")).numpy()
        assert set(np.unique(out)) <= {0.0, 2.0}

    def test_batchnorm_running_statistics(self):
        data = np.arange(12, dtype=np.float64).reshape(2, 2, 3)
        bn = BatchNorm1d(2, momentum=0.1, dtype=np.float64)
        bn(Tensor(data))
        per_channel = data.transpose(1, 0, 2).reshape(2, -1)
        npt.assert_allclose(bn.running_mean, 0.1 * per_channel.mean(axis=1))
        npt.assert_allclose(bn.running_var, 0.9 + 0.1 * per_channel.var(axis=1, ddof=1))

    def test_batchnorm_needs_two_values(self):
        bn = BatchNorm1d(2)
        with pytest.raises(StatisticsError):
            bn(Tensor(np.ones((1, 2, 1))))

    def test_batchnorm_eval_uses_running_stats(self, rng):
        bn = BatchNorm1d(3).eval()
        x = rng.normal((2, 3, 4))
        npt.assert_allclose(bn(Tensor(x)).numpy(), x / np.sqrt(1.0 + 1e-5), rtol=1e-5)

    def test_maxpool_picks_window_maxima(self):
        x = Tensor(np.array([[[1.0, 5.0, 2.0, 4.0, 3.0]]]))
        npt.assert_array_equal(fn.maxpool1d(x, 2, 2).numpy(), [[[5.0, 4.0]]])

    def test_maxpool_tie_sends_gradient_to_first_index(self):
        x = Tensor(np.array([[[2.0, 2.0]]]), requires_grad=True, dtype=np.float64)
        fn.maxpool1d(x, 2, 2).sum().backward()
        npt.assert_array_equal(x.grad, [[[1.0, 0.0]]])

    @pytest.mark.parametrize("a, b, expected", [([0.0, 0.0], [1.0, 1.0], 1.0), ([0.0, 2.0], [0.0, 0.0], 2.0)])
    def test_mse_is_a_mean(self, a, b, expected):
        assert fn.mse(Tensor(a), Tensor(b)).item() == pytest.approx(expected)

    def test_cross_entropy_uniform_logits(self):
        logits = Tensor(np.zeros((2, 4)))
        loss = fn.weighted_cross_entropy(logits, [0, 3])
        assert loss.item() == pytest.approx(np.log(4.0), rel=1e-6)

    def test_cross_entropy_class_weights(self):
        logits = Tensor(np.zeros((2, 2)), dtype=np.float64)
        loss = fn.weighted_cross_entropy(logits, [0, 1], np.array([1.0, 3.0]))
        assert loss.item() == pytest.approx(2.0 * np.log(2.0))

    def test_cross_entropy_target_out_of_range(self):
        with pytest.raises(TargetError):
            fn.weighted_cross_entropy(Tensor(np.zeros((1, 3))), [3])

    def test_cosine_similarity_of_parallel_rows(self):
        a = Tensor(np.array([[1.0, 2.0], [3.0, -1.0]]))
        npt.assert_allclose(fn.cosine_sim(a, a * 2.0).numpy(), [1.0, 1.0], rtol=1e-6)

    def test_cosine_similarity_examples(self):
        a = Tensor(np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 0.0]]), dtype=np.float64)
        b = Tensor(np.array([[0.0, 1.0], [1.0, 0.0], [1.0, 0.0]]), dtype=np.float64)
        npt.assert_allclose(fn.cosine_sim(a, b).numpy(), [0.0, 1.0 / np.sqrt(2.0), 0.0], atol=1e-12)


class TestInitAndOptim:
    def test_kaiming_std(self):
        weights = kaiming_init((256, 512), Rng(0, "init"), 0.01).numpy()
        expected = kaiming_gain(0.01) / np.sqrt(512)
        assert weights.std() == pytest.approx(expected, rel=0.05)

    def test_layers_start_with_zero_bias(self, rng):
        assert not Linear(4, 3, rng).bias.numpy().any()
        assert not Conv1d(3, 9, 9, rng, stride=4).bias.numpy().any()

    def test_adam_first_step_moves_by_lr(self):
        p = Parameter(np.array([1.0]), dtype=np.float64)
        p.grad = np.array([0.5])
        state = adam_step([("p", p)], AdamState.zeros([("p", p)]), lr=0.1)
        assert state.step_count == 1
        assert p.numpy()[0] == pytest.approx(0.9, abs=1e-6)

    def test_adam_treats_missing_grad_as_zero(self):
        p = Parameter(np.array([1.0, 2.0]))
        optimizer = Adam([("p", p)], lr=0.1)
        optimizer.step()
        npt.assert_array_equal(p.numpy(), [1.0, 2.0])

    def test_adam_rejects_duplicate_names(self):
        p = Parameter(np.zeros(2))
        with pytest.raises(ValueError):
            Adam([("p", p), ("p", p)])

    def test_adam_state_shape_mismatch(self):
        p = Parameter(np.zeros(3))
        state = AdamState.zeros([("p", Parameter(np.zeros(2)))])
        with pytest.raises(ShapeError):
            adam_step([("p", p)], state)


class TestRng:
    def test_streams_are_reproducible(self):
        npt.assert_array_equal(Rng(5, "a").normal(8), Rng(5, "a").normal(8))

    def test_streams_are_independent(self):
        assert not np.array_equal(Rng(5, "a").normal(8), Rng(5, "b").normal(8))
        assert not np.array_equal(Rng(5).spawn("x").normal(8), Rng(6).spawn("x").normal(8))

    def test_dropout_layer_draws_from_its_own_stream(self):
        x = Tensor(np.ones((10, 10)))
        first = Dropout(0.5, Rng(1, "d"))(x).numpy()
        second = Dropout(0.5, Rng(1, "d"))(x).numpy()
        npt.assert_array_equal(first, second)
