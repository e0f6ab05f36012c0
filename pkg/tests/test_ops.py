"""Primitive operators: forward values, broadcasting, registries and ranges."""

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from autoloss import ops
from autoloss.ops import ShapeMismatch, apply_binary, apply_unary, broadcast_binary

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def erf_exact(x: float) -> float:
    mpmath.mp.dps = 30
    return float(2 / mpmath.sqrt(mpmath.pi) * mpmath.quad(lambda t: mpmath.exp(-t * t), [0, x]))


class TestUnary:
    @pytest.mark.parametrize("op, expected", [
        ("Sig", 0.5), ("Gd", 0.5), ("Alf", 0.5), ("Erf", 0.5), ("Erfc", 0.5),
        ("Softplus", math.log(2)), ("Tanh", 0.0), ("Relu", 0.0), ("Cos", 1.0), ("Exp", 1.0),
    ])
    def test_values_at_zero(self, op, expected):
        assert float(apply_unary(op, np.asarray(0.0))) == pytest.approx(expected, abs=1e-15)

    def test_log_of_negative_is_nan(self):
        assert np.isnan(apply_unary("Log", np.asarray(-1.0)))

    def test_log_of_zero_is_minus_inf(self):
        assert apply_unary("Log", np.asarray(0.0)) == -np.inf

    def test_erf_matches_quadrature(self):
        xs = np.linspace(-6, 6, 241)
        raw = 2 * apply_unary("Erf", xs) - 1
        exact = np.array([erf_exact(x) for x in xs])
        assert np.max(np.abs(raw - exact)) <= 1.5e-7

    def test_erf_is_odd(self):
        xs = np.linspace(0, 6, 61)
        assert np.allclose(apply_unary("Erf", xs) + apply_unary("Erf", -xs), 1.0, atol=1e-15)

    def test_tanh_not_rescaled(self):
        assert float(apply_unary("Tanh", np.asarray(-3.0))) < 0

    @given(arrays(np.float64, 20, elements=finite))
    def test_s_curves_in_unit_interval(self, x):
        for op in ("Sig", "Gd", "Alf", "Erf", "Erfc"):
            y = apply_unary(op, x)
            assert np.all((y >= 0) & (y <= 1)), op

    def test_s_curves_open_interval_on_moderate_inputs(self):
        x = np.linspace(-5, 5, 101)
        for op in ("Sig", "Gd", "Alf", "Erf", "Erfc"):
            y = apply_unary(op, x)
            assert np.all((y > 0) & (y < 1)), op

    def test_s_curves_strictly_monotone(self):
        x = np.linspace(-4, 4, 401)
        for op in ("Sig", "Gd", "Alf", "Erf"):
            assert np.all(np.diff(apply_unary(op, x)) > 0), op
        assert np.all(np.diff(apply_unary("Erfc", x)) < 0)

    def test_alf_stable_for_large_inputs(self):
        y = apply_unary("Alf", np.array([-1e200, 1e200]))
        assert np.allclose(y, [0.0, 1.0])


class TestSoftmax:
    @given(arrays(np.float64, (4, 5), elements=finite))
    def test_rows_sum_to_one(self, x):
        assert np.allclose(apply_unary("Softmax", x).sum(axis=1), 1.0, atol=1e-12)

    @given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, 3, elements=finite))
    def test_shift_invariant(self, x, shift):
        a = apply_unary("Softmax", x)
        b = apply_unary("Softmax", x + shift[:, None])
        assert np.allclose(a, b, atol=1e-12)

    def test_vector_normalizes_whole_vector(self):
        y = apply_unary("Softmax", np.array([0.0, 0.0, math.log(2)]))
        assert np.allclose(y, [0.25, 0.25, 0.5])

    def test_scalar_is_one(self):
        assert float(apply_unary("Softmax", np.asarray(7.5))) == 1.0


class TestBinary:
    def test_dot_selects_with_one_hot(self):
        out = apply_binary("Dot", np.array([[0.0, 1.0, 0.0]]), np.array([[4.0, 5.0, 6.0]]))
        assert out.tolist() == [5.0]

    def test_div_by_zero_uses_epsilon(self):
        assert float(apply_binary("Div", np.asarray(1.0), np.asarray(0.0))) == pytest.approx(1e12)

    def test_sub(self):
        assert float(apply_binary("Sub", np.asarray(3.0), np.asarray(1.0))) == 2.0

    def test_dot_needs_matrices(self):
        with pytest.raises(ShapeMismatch):
            apply_binary("Dot", np.ones(3), np.ones((3, 2)))

    @given(st.floats(-1e6, 1e6), st.floats(0, 1e6))
    def test_div_finite_for_nonnegative_denominator(self, a, b):
        assert np.isfinite(apply_binary("Div", np.asarray(a), np.asarray(b)))


class TestBroadcast:
    def test_scalar_and_vector(self):
        assert broadcast_binary("Add", np.asarray(2.0), np.array([1.0, 3.0])).tolist() == [3.0, 5.0]

    def test_vector_expands_along_classes(self):
        out = broadcast_binary("Mul", np.array([0.5, 1.0]), np.ones((2, 2)))
        assert out.tolist() == [[0.5, 0.5], [1.0, 1.0]]

    def test_vector_length_mismatch(self):
        with pytest.raises(ShapeMismatch):
            broadcast_binary("Add", np.ones(3), np.ones(4))

    def test_matrix_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            broadcast_binary("Add", np.ones((2, 3)), np.ones((2, 4)))


class TestRegistry:
    def test_regression_excludes_softmax(self):
        assert "Softmax" not in ops.registry("reg")

    def test_classification_has_dot(self):
        assert "Dot" in ops.registry("cls")

    def test_regression_is_proper_subset(self):
        assert ops.registry("reg") < ops.registry("cls")

    def test_twenty_one_operators(self):
        assert len(ops.registry("cls")) == 21

    def test_config_rejects_bad_subset(self):
        with pytest.raises(ValueError):
            ops.OpConfig(registry_cls=frozenset({"Add"}), registry_reg=frozenset({"Mul"}))

    def test_arity(self):
        assert ops.arity("Neg") == 1
        assert ops.arity("Dot") == 2


@settings(max_examples=50)
@given(st.sampled_from(ops.UNARY_OPS), st.floats(-3, 3))
def test_unary_vjp_matches_difference(op, x0):
    if op in ("Log", "Sqrt"):
        x0 = abs(x0) + 0.1
    if op in ("Abs", "Relu") and abs(x0) < 1e-3:
        x0 = 0.5
    x = np.array([[x0, x0 + 0.3]])
    out = apply_unary(op, x)
    g = ops.unary_vjp(op, x, out, np.ones_like(out))
    h = 1e-6
    fd = (apply_unary(op, x + h).sum() - apply_unary(op, x - h).sum()) / (2 * h) if op == "Softmax" else \
        (apply_unary(op, x + h) - apply_unary(op, x - h)) / (2 * h)
    if op == "Softmax":
        # per-element directional check: the sum of a softmax row is constant
        assert np.allclose(g, 0.0, atol=1e-9) and abs(fd) < 1e-6
    else:
        assert np.allclose(g, fd, rtol=1e-6, atol=1e-7)
