"""Reverse-mode gradients: tape semantics and finite-difference agreement."""

import numpy as np
import pytest

from scanet.gradcheck import finite_diff_grad, gradcheck, max_rel_error
from scanet.tensor import (NonFiniteError, Parameter, ShapeError, Tape, Tensor,
                           backward, conv2d, mean_all, mul, relu, sigmoid,
                           sum_all)
from scanet.verify import run_suite


def test_sum_gradient_is_ones(rng):
    x = Tensor(rng.standard_normal((3, 4)))
    p = Parameter(x, "x")
    with Tape() as tape:
        loss = sum_all(x)
    backward(tape, loss)
    assert np.array_equal(p.grad.data, np.ones((3, 4)))


def test_quadratic_gradient_is_x(rng):
    x = Tensor(rng.standard_normal((2, 5)))
    p = Parameter(x, "x")
    with Tape() as tape:
        loss = 0.5 * sum_all(mul(x, x))
    backward(tape, loss)
    assert np.max(np.abs(p.grad.data - x.data)) < 1e-12


def test_backward_rejects_non_scalar(rng):
    x = Tensor(rng.standard_normal((2, 2)))
    with Tape() as tape:
        y = mul(x, x)
    with pytest.raises(ShapeError):
        backward(tape, y)


def test_backward_rejects_off_tape_loss(rng):
    x = Tensor(rng.standard_normal(3))
    with Tape() as tape:
        sum_all(x)
    stray = sum_all(x)  # recorded on no tape
    with pytest.raises(ValueError):
        backward(tape, stray)


def test_disconnected_parameter_keeps_zero_grad(rng):
    x = Tensor(rng.standard_normal(4))
    unused = Parameter(Tensor(rng.standard_normal(3)), "unused")
    Parameter(x, "x")
    with Tape() as tape:
        loss = sum_all(x)
    backward(tape, loss)
    assert not unused.grad.data.any()


def test_grad_accumulates_across_uses(rng):
    x = Tensor(rng.standard_normal(4))
    p = Parameter(x, "x")
    with Tape() as tape:
        loss = sum_all(mul(x, x))  # both inputs are the same tensor
    backward(tape, loss)
    assert np.max(np.abs(p.grad.data - 2 * x.data)) < 1e-12


def test_composite_matches_finite_differences(rng):
    x = Tensor(rng.standard_normal((2, 3, 5, 4)))
    w = Tensor(rng.standard_normal((4, 3, 3, 3)))
    b = Tensor(rng.standard_normal(4))

    def f(x_, w_, b_):
        return mean_all(sigmoid(conv2d(relu(x_), w_, b_, stride=1, pad=1)))

    assert gradcheck(f, [x, w, b], eps=1e-5) < 1e-5


def test_finite_diff_simple_values():
    x = Tensor(np.array([3.0]))
    g = finite_diff_grad(lambda t: float((t.data ** 2).sum()), x, eps=1e-5)
    assert abs(g.data[0] - 6.0) < 1e-8


def test_finite_diff_reports_non_finite_coordinate():
    x = Tensor(np.array([1.0, 0.5e-5]))

    def f(t):
        # coordinate 1 minus eps goes negative -> nan; coordinate 0 is fine
        with np.errstate(invalid="ignore"):
            return float(np.log(t.data[1]))

    with pytest.raises(NonFiniteError, match="coordinate 1"):
        finite_diff_grad(f, x, eps=1e-5)


def test_finite_diff_rejects_bad_eps():
    with pytest.raises(ValueError):
        finite_diff_grad(lambda t: 0.0, Tensor(np.zeros(1)), eps=0.0)


def test_max_rel_error_definition():
    a = Tensor(np.array([2.0, 0.5]))
    n = Tensor(np.array([2.0 + 2e-5, 0.5 + 3e-6]))
    # |diff| / max(1, |analytic|)
    assert abs(max_rel_error(a, n) - 1e-5) < 1e-9


@pytest.mark.slow
def test_every_primitive_passes_gradcheck():
    results = run_suite(seed=0, include_blocks=False)
    bad = [(n, e) for n, e in results if e >= 1e-5]
    assert not bad, f"failing primitives: {bad}"
