import numpy as np
import pytest

from conftest import finite_difference_grads, linear_model, max_relative_error, tiny_model
from stochprune.data import Dataset
from stochprune.net import (DTYPE, Dense, Model, ReLU, ResidualBlock, ShapeError,
                            SoftmaxCrossEntropy, build_residual_mlp, eval_accuracy)


def make_dataset(features, labels, classes):
    return Dataset(
        features=np.asarray(features, dtype=DTYPE),
        labels=np.asarray(labels, dtype=np.int64),
        num_classes=classes,
        split="test",
        provenance={"kind": "inline"},
    )


class TestForward:
    def test_identity_dense(self):
        model = linear_model(np.eye(2), bias=[0.0, 0.0])
        out = model.forward(np.array([[1.0, 2.0]]))
        np.testing.assert_array_equal(out, np.array([[1.0, 2.0]], dtype=DTYPE))

    def test_relu_definition(self):
        layer = ReLU()
        out = layer.forward(np.array([[-1.0, 0.0, 2.0]], dtype=DTYPE))
        np.testing.assert_array_equal(out, np.array([[0.0, 0.0, 2.0]], dtype=DTYPE))

    def test_residual_zero_inner_is_identity(self):
        block = ResidualBlock([Dense(2, 2)])  # zero-initialized weight/bias
        x = np.array([[3.0, 4.0]], dtype=DTYPE)
        np.testing.assert_array_equal(block.forward(x), x)

    def test_dense_shape_error_names_layer(self):
        model = linear_model(np.eye(3))
        with pytest.raises(ShapeError, match="layer 0"):
            model.forward(np.zeros((1, 2), dtype=DTYPE))

    def test_residual_width_change_rejected(self):
        block = ResidualBlock([Dense(2, 3)])
        model = Model([block, SoftmaxCrossEntropy(2)])
        with pytest.raises(ShapeError, match="residual"):
            model.forward(np.zeros((1, 2), dtype=DTYPE))


class TestBackward:
    def test_symmetric_softmax_two_classes(self):
        model = Model([SoftmaxCrossEntropy(2)])
        model.forward(np.array([[0.0, 0.0]]))
        loss, dlogits = model.loss_layer.loss_and_grad(np.array([0]))
        np.testing.assert_allclose(dlogits, [[-0.5, 0.5]], atol=1e-7)
        assert loss == pytest.approx(np.log(2.0), abs=1e-6)

    def test_bias_gradient_is_mean_softmax_minus_onehot(self):
        # all-zero weights, batch of two one-hot inputs with opposite labels
        model = linear_model(np.zeros((2, 2)), bias=[0.0, 0.0])
        x = np.array([[1.0, 0.0], [0.0, 1.0]])
        targets = np.array([0, 1])
        model.forward(x)
        grads, _ = model.backward(targets)
        # logits are zero so softmax is [0.5, 0.5] per sample;
        # mean(softmax - onehot) = ([-.5,.5] + [.5,-.5]) / 2 = [0, 0]
        np.testing.assert_allclose(grads["0.bias"], [0.0, 0.0], atol=1e-7)
        fd = finite_difference_grads(model, x.astype(DTYPE), targets)
        assert max_relative_error(grads["0.weight"], fd["0.weight"]) <= 1e-2
        assert max_relative_error(grads["0.bias"], fd["0.bias"]) <= 1e-2

    def test_backward_before_forward_raises(self):
        model, x, targets = tiny_model(0)
        with pytest.raises(RuntimeError, match="before forward"):
            model.backward(targets)

    def test_residual_identity_gradient(self):
        # zero inner weights: input gradient must equal the output gradient
        block = ResidualBlock([Dense(2, 2), ReLU(), Dense(2, 2)])
        model = Model([block, SoftmaxCrossEntropy(2)])
        x = np.array([[0.3, -0.7]], dtype=DTYPE)
        model.forward(x)
        loss, dy = model.loss_layer.loss_and_grad(np.array([1]))
        dx = block.backward(dy, {})
        np.testing.assert_array_equal(dx, dy)

    @pytest.mark.parametrize("seed", range(20))
    def test_finite_difference_all_layer_kinds(self, seed):
        model, x, targets = tiny_model(seed)
        model.forward(x)
        grads, _ = model.backward(targets)
        fd = finite_difference_grads(model, x, targets)
        for path in fd:
            assert max_relative_error(grads[path], fd[path]) <= 1e-2, path

    def test_determinism_bitwise(self):
        outs = []
        for _ in range(2):
            model, x, targets = tiny_model(7)
            logits = model.forward(x)
            grads, loss = model.backward(targets)
            outs.append((logits.tobytes(), loss,
                         {k: v.tobytes() for k, v in grads.items()}))
        assert outs[0] == outs[1]


class TestEvalAccuracy:
    def test_perfect_classifier(self):
        model = linear_model(np.eye(10))
        features = np.eye(10, dtype=DTYPE)
        ds = make_dataset(features, np.arange(10), 10)
        assert eval_accuracy(model, ds) == 1.0

    def test_constant_logits_tie_breaks_to_class_zero(self):
        model = linear_model(np.zeros((10, 10)))
        features = np.eye(10, dtype=DTYPE)
        labels = np.arange(10)
        ds = make_dataset(features, labels, 10)
        # all logits equal: argmax picks class 0, one sample has label 0
        assert eval_accuracy(model, ds) == pytest.approx(0.1)

    def test_three_of_four(self):
        model = linear_model(np.eye(2))
        features = np.array([[1, 0], [1, 0], [0, 1], [0, 1]], dtype=DTYPE)
        labels = np.array([0, 0, 1, 0])
        ds = make_dataset(features, labels, 2)
        assert eval_accuracy(model, ds) == 0.75

    def test_empty_dataset_rejected(self):
        model = linear_model(np.eye(2))
        ds = make_dataset(np.zeros((0, 2)), np.zeros(0, dtype=np.int64), 2)
        with pytest.raises(ValueError, match="empty"):
            eval_accuracy(model, ds)


class TestRegistry:
    def test_registry_order_and_paths(self):
        model = build_residual_mlp(4, 8, 2, 3)
        paths = [p for p, _ in model.parameters()]
        assert paths[0] == "0.weight" and paths[1] == "0.bias"
        assert "2.0.weight" in paths and "2.2.weight" in paths
        assert len(paths) == len(set(paths))

    def test_set_parameter_shape_checked(self):
        model = build_residual_mlp(4, 8, 1, 3)
        with pytest.raises(ShapeError):
            model.set_parameter("0.weight", np.zeros((3, 3), dtype=DTYPE))

    def test_copy_is_deep(self):
        model = build_residual_mlp(4, 8, 1, 3,
                                   rng=np.random.default_rng(0))
        clone = model.copy()
        for (pa, a), (pb, b) in zip(model.parameters(), clone.parameters()):
            assert pa == pb
            np.testing.assert_array_equal(a, b)
            assert a is not b
