import math

import numpy as np
import pytest

from pmp_reasoner.domain.errors import ContractViolationError
from pmp_reasoner.modeling.diff_core import (
    AdamState,
    SparseAdjacency,
    adam_step,
    affine,
    bce_with_logits,
    concat_cols,
    concat_rows,
    constant,
    gather_rows,
    init_affine,
    masked_neighbor_max,
    matmul,
    parameter,
    reduce_max_rows,
    relu,
    scale_rows,
    sigmoid,
    sum_scalars,
)


def to_scalar(t):
    """u^T t v with fixed random u, v so every entry reaches the loss."""
    rng = np.random.default_rng(99)
    u = constant(rng.normal(size=(1, t.shape[0])))
    v = constant(rng.normal(size=(t.shape[1], 1)))
    return matmul(matmul(u, t), v)


def numeric_grad(build, tensor, eps=1e-6):
    grad = np.zeros_like(tensor.data)
    for index in np.ndindex(*tensor.shape):
        original = tensor.data[index]
        tensor.data[index] = original + eps
        plus = build().item()
        tensor.data[index] = original - eps
        minus = build().item()
        tensor.data[index] = original
        grad[index] = (plus - minus) / (2 * eps)
    return grad


def check_gradients(build, *tensors):
    loss = build()
    for t in tensors:
        t.zero_grad()
    loss.backward()
    for t in tensors:
        np.testing.assert_allclose(t.grad, numeric_grad(build, t), rtol=1e-5, atol=1e-7)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


class TestGradients:
    def test_affine_relu_sigmoid(self, rng):
        x = parameter(rng.normal(size=(3, 4)))
        w = parameter(rng.normal(size=(4, 2)))
        b = parameter(rng.normal(size=(2,)))
        check_gradients(lambda: to_scalar(sigmoid(relu(affine(x, w, b)))), x, w, b)

    def test_concat_gather_reduce(self, rng):
        x = parameter(rng.normal(size=(4, 3)))
        y = parameter(rng.normal(size=(4, 2)))

        def build():
            joined = concat_cols([x, y])
            stacked = concat_rows([joined, gather_rows(joined, [2, 0, 2])])
            return to_scalar(reduce_max_rows(stacked))

        check_gradients(build, x, y)

    def test_bce_with_logits(self, rng):
        logits = parameter(rng.normal(size=(5, 1)))
        targets = np.array([1, 0, 1, 1, 0])
        check_gradients(lambda: bce_with_logits(logits, targets), logits)

    def test_masked_neighbor_max(self, rng):
        features = parameter(rng.normal(size=(4, 3)))
        message = init_affine(rng, 6, 3, "message")
        adjacency = SparseAdjacency.from_neighbor_sets([{0, 1}, {1, 2, 3}, {2}, {0, 3}])
        check_gradients(
            lambda: to_scalar(masked_neighbor_max(features, adjacency, message)),
            features,
            message.weight,
            message.bias,
        )


class TestValues:
    def test_bce_at_zero_logits_is_ln2(self):
        loss = bce_with_logits(constant(np.zeros((3, 4))), np.ones((3, 4)))
        assert loss.item() == pytest.approx(math.log(2))

    def test_bce_is_stable_for_large_logits(self):
        loss = bce_with_logits(constant(np.array([[800.0], [-800.0]])), np.array([1, 0]))
        assert loss.item() == pytest.approx(0.0)

    def test_empty_bce_is_zero(self):
        assert bce_with_logits(constant(np.zeros((0, 1))), np.zeros((0, 1))).item() == 0.0

    def test_sum_scalars(self):
        total = sum_scalars([constant(np.array([[1.0]])), constant(np.array([[2.5]]))])
        assert total.item() == 3.5
        assert sum_scalars([]).item() == 0.0

    def test_neighbor_max_is_relu_of_max(self, rng):
        features = constant(rng.normal(size=(3, 2)))
        message = init_affine(rng, 4, 2, "message")
        adjacency = SparseAdjacency.from_neighbor_sets([{0, 1, 2}, {1}, {2}])
        out = masked_neighbor_max(features, adjacency, message).data
        for j, row in enumerate(adjacency.neighbors):
            pre = [
                np.concatenate([features.data[k], features.data[j]]) @ message.weight.data
                + message.bias.data
                for k in row
            ]
            np.testing.assert_allclose(out[j], np.maximum(np.max(pre, axis=0), 0.0))

    def test_ties_route_gradient_to_lowest_neighbour(self):
        features = parameter(np.array([[0.0, 0.0], [1.0, 2.0], [1.0, 2.0]]))
        message = init_affine(np.random.default_rng(1), 4, 2, "message")
        message.weight.data = np.abs(message.weight.data)
        message.bias.data = np.ones(2)
        adjacency = SparseAdjacency.from_neighbor_sets([{1, 2}, {1}, {2}])
        out = masked_neighbor_max(features, adjacency, message)
        loss = matmul(gather_rows(out, [0]), constant(np.ones((2, 1))))
        loss.backward()
        assert np.any(features.grad[1] != 0)
        assert np.all(features.grad[2] == 0)


class TestContracts:
    def test_empty_neighbourhood(self, rng):
        message = init_affine(rng, 4, 2, "message")
        adjacency = SparseAdjacency.from_neighbor_sets([{0}, set()])
        with pytest.raises(ContractViolationError):
            masked_neighbor_max(constant(np.zeros((2, 2))), adjacency, message)

    def test_adjacency_size_mismatch(self, rng):
        message = init_affine(rng, 4, 2, "message")
        with pytest.raises(ContractViolationError):
            masked_neighbor_max(constant(np.zeros((3, 2))), SparseAdjacency.self_loops(2), message)

    def test_shape_mismatches(self):
        with pytest.raises(ContractViolationError):
            matmul(constant(np.zeros((2, 3))), constant(np.zeros((2, 3))))
        with pytest.raises(ContractViolationError):
            concat_cols([constant(np.zeros((2, 1))), constant(np.zeros((3, 1)))])
        with pytest.raises(ContractViolationError):
            reduce_max_rows(constant(np.zeros((0, 3))))

    def test_backward_needs_a_scalar(self):
        with pytest.raises(ContractViolationError):
            parameter(np.zeros((2, 2))).backward()


class TestInitAndAdam:
    def test_init_bounds(self, rng):
        component = init_affine(rng, 16, 8, "f")
        assert component.weight.shape == (16, 8)
        assert component.bias.shape == (8,)
        assert np.abs(component.weight.data).max() <= 0.25
        assert component.weight.name == "f.weight"

    def test_adam_minimises_a_quadratic(self):
        x = parameter(np.array([[3.0, -2.0]]))
        state = AdamState(learning_rate=0.1)
        for _ in range(500):
            adam_step({"x": x}, {"x": 2 * x.data}, state)
        assert np.abs(x.data).max() < 0.2
        assert state.step == 500

    def test_first_adam_step_moves_by_learning_rate(self):
        x = parameter(np.array([[1.0, 1.0]]))
        adam_step({"x": x}, {"x": np.array([[0.5, -2.0]])}, AdamState(learning_rate=0.01))
        np.testing.assert_allclose(x.data, [[0.99, 1.01]], atol=1e-6)

    def test_adam_rejects_wrong_gradient_shape(self):
        x = parameter(np.zeros((1, 2)))
        with pytest.raises(ContractViolationError):
            adam_step({"x": x}, {"x": np.zeros((2, 1))}, AdamState())
