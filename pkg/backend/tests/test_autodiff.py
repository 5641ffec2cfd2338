"""
Tests for the reverse-mode engine: gradient checks, batch-norm state and Adam
"""

import logging

import numpy as np
import pytest

from src.autodiff import ops
from src.autodiff.gradcheck import finite_diff_check
from src.autodiff.nn import BatchNorm, Conv2d, Dense, Parameter
from src.autodiff.tensor import Tensor, backward, name_scope, no_grad, node_census, precision
from src.reporting.selfcheck import GRAD_TOLERANCE, check_gradients
from src.training.optimizer import Adam, adam_step
from src.utils.errors import ShapeError


def _leaf(rng, *shape, positive=False):
    data = rng.uniform(0.5, 2.0, size=shape) if positive else rng.normal(size=shape)
    return Tensor(data, requires_grad=True)


class TestGradients:
    @pytest.mark.parametrize("seed", range(5))
    def test_core_layers(self, seed):
        result = check_gradients(seed)
        assert result.passed, result.detail

    @pytest.mark.parametrize("seed", range(3))
    def test_pooling_and_elementwise(self, seed):
        rng = np.random.default_rng(seed)
        with precision("float64"):
            x = _leaf(rng, 2, 3, 4, 6)
            pos = _leaf(rng, 3, 4, positive=True)
            w = {name: rng.normal(size=shape) for name, shape in [("max", (2, 3, 2, 3)), ("avg", (2, 3, 2, 2))]}
            cases = [
                (lambda t: ops.sum(ops.mul(ops.max_pool(t, (2, 2)), w["max"])), x),
                (lambda t: ops.sum(ops.mul(ops.avg_pool(t, (2, 3)), w["avg"])), x),
                (lambda t: ops.sum(ops.square(ops.global_pool(t, "max_time"))), x),
                (lambda t: ops.sum(ops.square(ops.global_pool(t, "avg_freq"))), x),
                (lambda t: ops.sum(ops.square(ops.global_pool(t, "avg_channel"))), x),
                (lambda t: ops.sum(ops.mul(ops.log(t), ops.sqrt(t))), pos),
                (lambda t: ops.sum(ops.div(ops.exp(t), ops.add([t, 1.0]))), pos),
                (lambda t: ops.sum(ops.square(ops.relu(ops.sub(t, 1.0)))), pos),
            ]
            for f, inputs in cases:
                assert finite_diff_check(f, inputs, rng=np.random.default_rng(seed)) < GRAD_TOLERANCE

    def test_dense_concat_and_take(self):
        rng = np.random.default_rng(7)
        with precision("float64"):
            a, b = _leaf(rng, 4, 3), _leaf(rng, 4, 2)
            w = _leaf(rng, 5, 2)

            def f(t):
                joined = ops.concat([t[0], t[1]], axis=-1)
                picked = ops.take(joined, [0, 2, 2], axis=0)
                return ops.sum(ops.square(ops.matmul(picked, t[2])))

            assert finite_diff_check(f, [a, b, w]) < GRAD_TOLERANCE

    def test_strided_conv_with_bias(self):
        rng = np.random.default_rng(3)
        with precision("float64"):
            x, k, bias = _leaf(rng, 2, 2, 7, 6), _leaf(rng, 3, 2, 2, 3), _leaf(rng, 3)
            w = rng.normal(size=(2, 3, 4, 3))

            def f(t):
                return ops.sum(ops.mul(ops.conv2d(t[0], t[1], t[2], stride=2, padding="same"), w))

            assert finite_diff_check(f, [x, k, bias], max_coords=20) < GRAD_TOLERANCE


class TestEngine:
    def test_shared_input_accumulates(self):
        with precision("float64"):
            x = Tensor([3.0], requires_grad=True)
            backward(ops.sum(ops.mul(x, x)))
        assert x.grad.tolist() == [6.0]

    def test_backward_needs_a_scalar(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ShapeError):
            backward(ops.mul(x, 2.0))

    def test_no_grad_records_nothing(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            y = ops.mul(x, 2.0)
        assert y.is_leaf() and not y.requires_grad

    def test_unreached_params_get_zero_gradients(self):
        used, unused = Parameter(np.ones(2)), Parameter(np.ones(3))
        backward(ops.sum(used), params=[used, unused])
        assert unused.grad.tolist() == [0.0, 0.0, 0.0]

    def test_census_counts_ops_per_scope(self):
        x = Tensor(np.ones((2, 3)), requires_grad=True)
        with name_scope("branch"):
            y = ops.relu(ops.mul(x, 2.0))
        census = node_census([ops.sum(y)])
        assert census[("branch", "relu")] == 1
        assert census[("", "sum")] == 1

    def test_first_non_finite_node_is_logged(self, caplog):
        x = Tensor(np.array([1.0, -1.0]), requires_grad=True)
        with caplog.at_level(logging.WARNING, logger="src.autodiff.tensor"), np.errstate(invalid="ignore"):
            with name_scope("head"):
                y = ops.log(x)
            ops.relu(ops.mul(y, 2.0))
        records = [r for r in caplog.records if r.name == "src.autodiff.tensor"]
        assert len(records) == 1
        assert records[0].levelno == logging.WARNING
        assert "produced by log in scope head" in records[0].getMessage()

    def test_float32_by_default(self):
        assert Tensor([1.0]).data.dtype == np.float32
        with precision("float64"):
            assert Tensor([1.0]).data.dtype == np.float64

    def test_same_padding_keeps_size(self):
        conv = Conv2d(2, 4, (2, 3), np.random.default_rng(0))
        assert conv(Tensor(np.zeros((1, 2, 5, 7)))).shape == (1, 4, 5, 7)


class TestBatchNorm:
    def test_running_statistics_follow_momentum(self):
        bn = BatchNorm(2, momentum=0.9)
        x = np.array([[1.0, 10.0], [3.0, 30.0]])
        bn(Tensor(x))
        np.testing.assert_allclose(bn._buffers["running_mean"], [0.2, 2.0], rtol=1e-6)
        np.testing.assert_allclose(bn._buffers["running_var"], [0.9 + 0.1 * 1.0, 0.9 + 0.1 * 100.0], rtol=1e-6)

    def test_train_mode_normalizes_the_batch(self):
        bn = BatchNorm(3)
        out = bn(Tensor(np.random.default_rng(0).normal(5.0, 3.0, size=(64, 3)))).data
        np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-5)
        np.testing.assert_allclose(out.std(axis=0), 1.0, atol=1e-3)

    def test_eval_mode_uses_running_statistics(self):
        bn = BatchNorm(1).eval()
        bn._buffers["running_mean"][:] = 2.0
        bn._buffers["running_var"][:] = 4.0
        out = bn(Tensor(np.array([[4.0], [6.0]]))).data
        np.testing.assert_allclose(out.ravel(), [1.0, 2.0], rtol=1e-4)
        assert bn._buffers["running_mean"][0] == 2.0

    def test_state_round_trip_checks_shapes(self):
        layer = Dense(3, 2, np.random.default_rng(0))
        state = layer.state_dict()
        other = Dense(3, 2, np.random.default_rng(1))
        other.load_state_dict(state)
        np.testing.assert_array_equal(other.weight.data, layer.weight.data)
        with pytest.raises(ShapeError):
            Dense(4, 2, np.random.default_rng(0)).load_state_dict(state)


class TestAdam:
    def test_first_step_moves_by_lr_against_the_gradient_sign(self):
        with precision("float64"):
            p = Parameter(np.array([1.0, -2.0, 0.5]))
        p.grad = np.array([0.5, -3.0, 1e-3])
        adam_step([p], lr=1e-3)
        np.testing.assert_allclose(p.data, [1.0 - 1e-3, -2.0 + 1e-3, 0.5 - 1e-3], rtol=1e-6)
        assert p.adam.step == 1

    def test_parameters_without_gradient_are_untouched(self):
        p = Parameter(np.ones(2))
        adam_step([p], lr=0.1)
        assert p.data.tolist() == [1.0, 1.0]
        assert p.adam.step == 0

    def test_minimizes_a_quadratic(self):
        with precision("float64"):
            p = Parameter(np.array([3.0, -4.0]))
            opt = Adam([p], lr=0.1)
            target = np.array([1.0, 2.0])
            for _ in range(1000):
                opt.zero_grad()
                backward(ops.sum(ops.square(ops.sub(p, target))))
                opt.step()
        np.testing.assert_allclose(p.data, target, atol=2e-2)
