import numpy as np
import pytest

from charflow.expr import ExpressionError, compile_scalar, compile_vector


def test_scalar_arithmetic_and_functions():
    f = compile_scalar("2*x^2 - sin(pi*y) + atan2(y, x)", ["x", "y"])
    x, y = np.array([1.0, 2.0]), np.array([0.5, -1.0])
    expected = 2 * x**2 - np.sin(np.pi * y) + np.arctan2(y, x)
    assert np.allclose(f(x, y), expected, rtol=0, atol=1e-15)


def test_constant_broadcasts_to_input_shape():
    f = compile_scalar("3", ["s"])
    assert f(np.zeros((2, 5))).shape == (2, 5)
    assert np.all(f(np.zeros(4)) == 3)


def test_aliases():
    f = compile_scalar("x*cos(q3) + y*sin(q3)", ["q1", "q2", "q3"], aliases={"x": "q1", "y": "q2", "z": "q3"})
    assert f(1.0, 2.0, 0.0) == pytest.approx(1.0)


def test_vector_length_checked():
    assert len(compile_vector("s, s**2, 0, 1", ["s"], length=4)) == 4
    with pytest.raises(ExpressionError):
        compile_vector("s, s", ["s"], length=4)


@pytest.mark.parametrize("text", [
    "__import__('os')",
    "x.real",
    "open('f')",
    "lambda: 1",
    "[x for x in s]",
    "w + 1",
    "sin(x, x)",
    "1 +",
])
def test_rejects_unsafe_or_unknown(text):
    with pytest.raises(ExpressionError):
        compile_scalar(text, ["x", "s"])
