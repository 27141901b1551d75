"""Layer forward/backward passes against hand values and finite differences."""

from __future__ import annotations

import numpy as np
import pytest

from plqlab.errors import ConfigError, ShapeMismatchError
from plqlab.numgrad import (
    LayerKind,
    avg_pool2x2,
    backward_input,
    backward_weights,
    conv2d,
    dropout_site,
    flatten,
    forward,
    fully_connected,
    numeric_gradient,
    output_shape,
    relative_error,
    relu,
    top_k_indices,
)


def _scalarized(layer, x, direction):
    """Random linear functional of the layer output, so gradients are generic."""
    return lambda v: float(np.sum(forward(layer, v) * direction))


class TestForward:
    def test_relu(self):
        np.testing.assert_array_equal(forward(relu(), np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])

    def test_dropout_inverted_scaling(self):
        out = forward(dropout_site(0.5), np.array([2.0, 4.0, 6.0, 8.0]), np.array([1.0, 0.0, 1.0, 0.0]))
        np.testing.assert_array_equal(out, [4.0, 0.0, 12.0, 0.0])

    def test_dropout_deterministic_mode_is_identity(self):
        x = np.array([0.3, -1.2, 5.0])
        np.testing.assert_array_equal(forward(dropout_site(0.5), x), x)

    def test_dropout_all_ones_mask_in_vanishing_p_limit(self):
        x = np.random.default_rng(0).normal(size=64)
        site = dropout_site(1e-17)
        np.testing.assert_array_equal(forward(site, x, np.ones(64)), forward(site, x))

    def test_fully_connected(self):
        layer = fully_connected([[1.0, 2.0], [3.0, 4.0]], [0.0, 0.0])
        np.testing.assert_array_equal(forward(layer, np.array([1.0, 1.0])), [3.0, 7.0])

    def test_avg_pool(self):
        x = np.arange(16, dtype=float).reshape(4, 4, 1)
        out = forward(avg_pool2x2(), x)
        np.testing.assert_array_equal(out[..., 0], [[2.5, 4.5], [10.5, 12.5]])

    def test_conv_matches_direct_loop(self, rng):
        w = rng.normal(size=(3, 3, 2, 4))
        b = rng.normal(size=4)
        x = rng.normal(size=(6, 6, 2))
        out = forward(conv2d(w, b, padding=1), x)
        xp = np.pad(x, ((1, 1), (1, 1), (0, 0)))
        expected = np.empty((6, 6, 4))
        for i in range(6):
            for j in range(6):
                for d in range(4):
                    expected[i, j, d] = np.sum(xp[i : i + 3, j : j + 3, :] * w[..., d]) + b[d]
        np.testing.assert_allclose(out, expected, rtol=1e-12, atol=1e-12)

    def test_forward_is_pure(self, rng):
        layer = conv2d(rng.normal(size=(3, 3, 3, 2)), padding=1)
        x = rng.normal(size=(8, 8, 3))
        np.testing.assert_array_equal(forward(layer, x), forward(layer, x))

    def test_mask_on_non_dropout_layer_rejected(self):
        with pytest.raises(ConfigError):
            forward(relu(), np.ones(3), np.ones(3))


class TestShapes:
    def test_conv_output_shape_with_stride(self):
        layer = conv2d(np.zeros((3, 3, 1, 2)), stride=2, padding=1)
        assert output_shape(layer, (7, 7, 1)) == (4, 4, 2)

    def test_conv_non_integer_output_rejected(self):
        layer = conv2d(np.zeros((3, 3, 1, 1)), stride=2)
        with pytest.raises(ShapeMismatchError):
            output_shape(layer, (6, 6, 1))

    def test_pool_needs_even_sides(self):
        with pytest.raises(ShapeMismatchError):
            output_shape(avg_pool2x2(), (5, 4, 1))

    def test_upstream_mismatch_names_shapes(self):
        layer = fully_connected(np.ones((2, 3)))
        with pytest.raises(ShapeMismatchError) as info:
            backward_input(layer, np.ones(3), np.ones(4))
        assert info.value.actual == (4,)

    def test_flatten_round_trip(self, rng):
        x = rng.normal(size=(2, 3, 4))
        assert forward(flatten(), x).shape == (24,)
        g = rng.normal(size=24)
        assert backward_input(flatten(), x, g).shape == x.shape

    def test_layer_kinds(self):
        assert relu().kind is LayerKind.RELU
        assert dropout_site(0.5).kind is LayerKind.DROPOUT


class TestBackwardInput:
    def test_relu_gates(self):
        np.testing.assert_array_equal(backward_input(relu(), np.array([-1.0, 2.0]), np.array([5.0, 5.0])), [0.0, 5.0])

    def test_relu_subgradient_zero_at_zero(self):
        assert backward_input(relu(), np.array([0.0]), np.array([3.0]))[0] == 0.0

    def test_fully_connected_transpose(self):
        layer = fully_connected([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(backward_input(layer, np.zeros(2), np.array([1.0, 0.0])), [1.0, 2.0])

    def test_dropout_passes_through(self):
        g = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(backward_input(dropout_site(0.3), np.ones(3), g), g)

    @pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
    def test_conv_matches_finite_differences(self, rng, stride, padding):
        layer = conv2d(rng.normal(size=(3, 3, 2, 3)), rng.normal(size=3), stride=stride, padding=padding)
        x = rng.normal(size=(7, 7, 2)) if stride == 2 else rng.normal(size=(6, 6, 2))
        direction = rng.normal(size=output_shape(layer, x.shape))
        analytic = backward_input(layer, x, direction)
        numeric = numeric_gradient(_scalarized(layer, x, direction), x)
        assert relative_error(analytic, numeric, floor=1e-2).max() < 1e-6

    def test_pool_matches_finite_differences(self, rng):
        x = rng.normal(size=(4, 6, 3))
        direction = rng.normal(size=(2, 3, 3))
        analytic = backward_input(avg_pool2x2(), x, direction)
        numeric = numeric_gradient(_scalarized(avg_pool2x2(), x, direction), x)
        assert relative_error(analytic, numeric, floor=1e-2).max() < 1e-6

    def test_fully_connected_matches_finite_differences(self, rng):
        layer = fully_connected(rng.normal(size=(5, 8)), rng.normal(size=5))
        x = rng.normal(size=8)
        direction = rng.normal(size=5)
        analytic = backward_input(layer, x, direction)
        numeric = numeric_gradient(_scalarized(layer, x, direction), x)
        assert relative_error(analytic, numeric, floor=1e-2).max() < 1e-6


class TestBackwardWeights:
    def test_fully_connected_outer_product(self):
        layer = fully_connected(np.zeros((1, 2)))
        grads = backward_weights(layer, np.array([1.0, 2.0]), np.array([3.0]))
        np.testing.assert_array_equal(grads.weights, [[3.0, 6.0]])
        np.testing.assert_array_equal(grads.bias, [3.0])

    def test_zero_upstream_gives_zero(self, rng):
        layer = conv2d(rng.normal(size=(3, 3, 2, 2)), padding=1)
        grads = backward_weights(layer, rng.normal(size=(5, 5, 2)), np.zeros((5, 5, 2)))
        assert not grads.weights.any()
        assert not grads.bias.any()

    def test_conv_matches_finite_differences(self, rng):
        w = rng.normal(size=(3, 3, 2, 3))
        b = rng.normal(size=3)
        x = rng.normal(size=(6, 6, 2))
        layer = conv2d(w, b, padding=1)
        direction = rng.normal(size=(6, 6, 3))
        grads = backward_weights(layer, x, direction)

        def of_weights(v):
            return float(np.sum(forward(conv2d(v, b, padding=1), x) * direction))

        def of_bias(v):
            return float(np.sum(forward(conv2d(w, v, padding=1), x) * direction))

        assert relative_error(grads.weights, numeric_gradient(of_weights, w), floor=1e-2).max() < 1e-6
        assert relative_error(grads.bias, numeric_gradient(of_bias, b), floor=1e-2).max() < 1e-6

    def test_weightless_layers_return_empty(self):
        grads = backward_weights(relu(), np.ones(3), np.ones(3))
        assert grads.weights.size == 0 and grads.bias.size == 0


class TestGradcheckHelpers:
    def test_numeric_gradient_of_quadratic(self):
        x = np.array([1.0, -2.0, 0.5])
        np.testing.assert_allclose(numeric_gradient(lambda v: float(v @ v), x), 2 * x, rtol=1e-9)

    def test_numeric_gradient_subset_is_flat(self):
        x = np.arange(6, dtype=float).reshape(2, 3)
        out = numeric_gradient(lambda v: float(v.sum()), x, indices=[(1, 2), (0, 0)])
        np.testing.assert_allclose(out, [1.0, 1.0])

    def test_top_k_orders_by_magnitude(self):
        values = np.array([[0.1, -5.0], [3.0, 0.0]])
        assert top_k_indices(values, 2) == [(0, 1), (1, 0)]
