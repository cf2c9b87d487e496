import math

import numpy as np
import pytest

from qneurons import ActivationKind, InvalidConfig, act_deriv, act_eval, limit_form

ALL_TAGS = ("sigmoid", "tanh", "relu", "softplus", "elu")
SMOOTH_TAGS = ("sigmoid", "tanh", "softplus")


def central_diff(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2.0 * h)


class TestEval:
    def test_sigmoid_at_zero(self):
        assert act_eval(ActivationKind("sigmoid"), 0.0) == pytest.approx(0.5, abs=1e-15)

    def test_relu_negative(self):
        assert act_eval(ActivationKind("relu"), -3.0) == 0.0

    def test_elu_negative(self):
        # alpha*(exp(x)-1) at x=-1
        assert act_eval(ActivationKind("elu"), -1.0) == pytest.approx(math.exp(-1.0) - 1.0, rel=1e-12)

    def test_softplus_matches_naive_form_in_safe_range(self):
        for x in np.linspace(-20, 20, 41):
            assert act_eval(ActivationKind("softplus"), x) == pytest.approx(
                math.log1p(math.exp(x)) if x < 0 else x + math.log1p(math.exp(-x)), rel=1e-12
            )

    @pytest.mark.parametrize("tag", ALL_TAGS)
    def test_no_overflow_at_large_inputs(self, tag):
        kind = ActivationKind(tag)
        for x in (-90.0, 90.0, -700.0, 700.0):
            assert math.isfinite(act_eval(kind, x))
            assert math.isfinite(act_deriv(kind, x, 1))
            assert math.isfinite(act_deriv(kind, x, 2))

    def test_softplus_large_x_equals_x_plus_tail(self):
        x = 35.0
        assert act_eval(ActivationKind("softplus"), x) == pytest.approx(
            x + math.log1p(math.exp(-x)), rel=1e-15
        )

    def test_vectorized_matches_scalar(self):
        xs = np.linspace(-4, 4, 17)
        for tag in ALL_TAGS:
            kind = ActivationKind(tag)
            vec = act_eval(kind, xs)
            assert vec.shape == xs.shape
            for i, x in enumerate(xs):
                assert vec[i] == pytest.approx(act_eval(kind, float(x)), rel=1e-15)


class TestKindValidation:
    def test_unknown_tag_rejected(self):
        with pytest.raises(InvalidConfig):
            ActivationKind("swish")

    def test_elu_alpha_must_be_positive(self):
        with pytest.raises(InvalidConfig):
            ActivationKind("elu", alpha=0.0)


class TestDeriv:
    def test_sigmoid_first_deriv_at_zero(self):
        # sigm'(0) = sigm(0) (1 - sigm(0))
        assert act_deriv(ActivationKind("sigmoid"), 0.0, 1) == pytest.approx(0.25, abs=1e-15)

    def test_relu_linear_on_positive_ray(self):
        assert act_deriv(ActivationKind("relu"), 5.0, 2) == 0.0

    def test_tanh_second_deriv_odd_at_origin(self):
        assert act_deriv(ActivationKind("tanh"), 0.0, 2) == 0.0

    def test_relu_subgradient_zero_at_kink(self):
        assert act_deriv(ActivationKind("relu"), 0.0, 1) == 0.0

    def test_elu_first_deriv_continuous_at_zero_for_unit_alpha(self):
        kind = ActivationKind("elu", alpha=1.0)
        assert act_deriv(kind, 0.0, 1) == 1.0
        assert act_deriv(kind, -1e-12, 1) == pytest.approx(1.0, abs=1e-10)
        assert act_eval(kind, -1e-12) == pytest.approx(0.0, abs=1e-10)

    @pytest.mark.parametrize("tag", ALL_TAGS)
    def test_first_deriv_matches_finite_difference(self, tag):
        kind = ActivationKind(tag)
        for x in np.linspace(-10, 10, 81):
            if tag in ("relu", "elu") and abs(x) < 1e-3:
                continue
            fd = central_diff(lambda t: act_eval(kind, t), float(x))
            assert act_deriv(kind, float(x), 1) == pytest.approx(fd, rel=1e-5, abs=1e-9)

    @pytest.mark.parametrize("tag", ALL_TAGS)
    def test_second_deriv_matches_finite_difference_of_first(self, tag):
        kind = ActivationKind(tag)
        for x in np.linspace(-10, 10, 81):
            if tag in ("relu", "elu") and abs(x) < 1e-3:
                continue
            fd = central_diff(lambda t: act_deriv(kind, t, 1), float(x), h=1e-5)
            assert act_deriv(kind, float(x), 2) == pytest.approx(fd, rel=1e-4, abs=1e-7)

    def test_invalid_order_rejected(self):
        with pytest.raises(InvalidConfig):
            act_deriv(ActivationKind("tanh"), 0.0, 3)


class TestLimitForm:
    def test_relu_row_is_relu(self):
        assert limit_form(ActivationKind("relu"), 2.0) == 2.0
        assert limit_form(ActivationKind("relu"), -2.0) == 0.0

    @pytest.mark.parametrize("tag", ALL_TAGS)
    def test_zero_at_origin(self, tag):
        assert limit_form(ActivationKind(tag), 0.0) == 0.0

    def test_softplus_row_is_sigmoid_times_x(self):
        want = 1.0 / (1.0 + math.exp(-1.0))
        assert limit_form(ActivationKind("softplus"), 1.0) == pytest.approx(want, rel=1e-12)

    @pytest.mark.parametrize("tag", ALL_TAGS)
    def test_equals_first_deriv_times_x_on_grid(self, tag):
        kind = ActivationKind(tag)
        xs = np.linspace(-5, 5, 201)
        got = limit_form(kind, xs)
        want = act_deriv(kind, xs, 1) * xs
        np.testing.assert_allclose(got, want, atol=1e-12, rtol=0)

    def test_elu_negative_branch(self):
        kind = ActivationKind("elu", alpha=1.3)
        x = -0.7
        assert limit_form(kind, x) == pytest.approx(1.3 * math.exp(x) * x, rel=1e-12)
