from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orbit_bounce.expr import ExpressionError, compile_expression


def test_scalar_and_array_evaluation():
    h = compile_expression("1 - cos(2*pi*t/T)", ["t"], T=1.0)
    assert h(0.5) == pytest.approx(2.0)
    assert isinstance(h(0.5), float)
    out = h(np.array([0.0, 0.25, 0.5]))
    np.testing.assert_allclose(out, [0.0, 1.0, 2.0], atol=1e-15)


def test_constant_broadcasts_over_arrays():
    h = compile_expression("3", ["t"])
    np.testing.assert_array_equal(h(np.zeros(4)), np.full(4, 3.0))


def test_list_arguments():
    h = compile_expression("t * 2", ["t"])
    np.testing.assert_array_equal(h([1, 2]), [2.0, 4.0])


@pytest.mark.parametrize("src", [
    "__import__('os')", "t.real", "open('x')", "abs(t)", "t if t else 1", "[t]",
    "t < 1", "lambda: 1", "'s'", "True", "y + 1", "sin(t, t)", "t // 2", "t % 2",
])
def test_rejects_unsupported(src):
    with pytest.raises(ExpressionError):
        compile_expression(src, ["t"])


def test_syntax_error_is_expression_error():
    with pytest.raises(ExpressionError):
        compile_expression("1 +", ["t"])


@settings(max_examples=50, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), t=st.floats(-10, 10))
def test_matches_python_arithmetic(a, b, t):
    h = compile_expression(f"{a!r} * sin(t) + {b!r} * cos(2*t) - t**2 / 4", ["t"])
    ref = a * math.sin(t) + b * math.cos(2 * t) - t ** 2 / 4
    assert h(t) == pytest.approx(ref, rel=1e-12, abs=1e-12)
    assert h(np.array([t]))[0] == pytest.approx(ref, rel=1e-12, abs=1e-12)
