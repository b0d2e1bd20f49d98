"""Truncated Taylor arithmetic against closed-form derivatives."""

import numpy as np
import pytest

from delaysafe import jets
from delaysafe.exprs import ExpressionError, compile_expression
from delaysafe.jets import Jet, JetOrderError


def test_variable_and_constant():
    t = jets.variable(2.0, 3)
    assert t.value == 2.0
    assert t.d(1) == 1.0
    assert t.d(2) == 0.0
    c = jets.constant(5.0, 2)
    assert c.value == 5.0
    assert c.d(1) == 0.0
    assert c.order == 2


def test_polynomial_derivatives():
    t = jets.variable(1.5, 4)
    p = 3 * t**2 - t + 2
    assert p.value == pytest.approx(3 * 1.5**2 - 1.5 + 2)
    assert p.d(1) == pytest.approx(6 * 1.5 - 1)
    assert p.d(2) == pytest.approx(6.0)
    assert p.d(3) == 0.0
    assert p.d(4) == 0.0


def test_transcendental_chain_rule():
    # f = exp(sin t): f' = cos(t) f, f'' = (cos^2 t - sin t) f
    t0 = 0.7
    f = jets.exp(jets.sin(jets.variable(t0, 2)))
    e = np.exp(np.sin(t0))
    assert f.value == pytest.approx(e)
    assert f.d(1) == pytest.approx(np.cos(t0) * e)
    assert f.d(2) == pytest.approx((np.cos(t0) ** 2 - np.sin(t0)) * e)


def test_quotient_and_negative_power():
    t = jets.variable(2.0, 3)
    g = (t**2 + 1) / t  # t + 1/t
    assert g.value == pytest.approx(2.5)
    assert g.d(1) == pytest.approx(1 - 1 / 4)
    assert g.d(2) == pytest.approx(2 / 8)
    h = t ** (-2)
    assert h.value == pytest.approx(0.25)
    assert h.d(1) == pytest.approx(-2 / 2**3)


def test_dot_drops_one_order():
    f = jets.cos(jets.variable(0.3, 3))
    fd = f.dot()
    assert fd.order == 2
    assert fd.value == pytest.approx(-np.sin(0.3))
    assert fd.d(1) == pytest.approx(-np.cos(0.3))


def test_dn_matches_repeated_dot():
    f = jets.sin(jets.variable(1.0, 4)) * jets.variable(1.0, 4)
    assert f.dn(2).value == pytest.approx(f.dot().dot().value)
    assert f.dn(0) is f


def test_order_exhaustion_raises():
    t = jets.variable(0.0, 1)
    with pytest.raises(JetOrderError):
        t.dot().dot()
    with pytest.raises(JetOrderError):
        t.d(2)


def test_truncate():
    t = jets.variable(1.0, 4)
    cut = t.truncate(2)
    assert cut.order == 2
    assert cut.value == 1.0
    assert t.truncate(9) is t
    with pytest.raises(JetOrderError):
        t.truncate(-1)


def test_batched_coefficients_broadcast():
    # jets carry arrays transparently: one jet per grid point
    t0 = np.array([0.0, 0.5, 1.0])
    f = jets.sin(jets.variable(t0, 2)) * 2.0
    assert np.allclose(f.value, 2 * np.sin(t0))
    assert np.allclose(f.d(1), 2 * np.cos(t0))


def test_mixed_arithmetic_with_scalars():
    t = jets.variable(0.5, 2)
    g = 1.0 - t
    assert g.value == pytest.approx(0.5)
    assert g.d(1) == pytest.approx(-1.0)
    h = 2.0 / (1.0 + t)
    assert h.value == pytest.approx(2 / 1.5)
    assert h.d(1) == pytest.approx(-2 / 1.5**2)


# -- the expression front end -------------------------------------------------


def test_compile_expression_on_floats_and_jets():
    fn = compile_expression("(-5*y2 + 0.25*y2**2)/4", ("y1", "y2"))
    assert fn(0.0, -1.0) == pytest.approx(1.3125)
    j = fn(jets.constant(0.0, 2), jets.variable(-1.0, 2))
    assert j.d(1) == pytest.approx((-5 + 0.5 * -1.0) / 4)


def test_compile_expression_trig():
    fn = compile_expression("-4*t + cos(t) - 10.5", ("t",))
    ts = np.linspace(0.0, 3.0, 7)
    assert np.allclose(fn(ts), -4 * ts + np.cos(ts) - 10.5)


@pytest.mark.parametrize("src", [
    "__import__('os')",
    "y1.real",
    "y1[0]",
    "open('x')",
    "y1 if y1 else 0",
    "unknown_name + 1",
    "y1 ** y1",        # exponent must be a literal integer
    "sin(y1, y1)",
])
def test_compile_expression_rejects(src):
    with pytest.raises(ExpressionError):
        compile_expression(src, ("y1",))


def test_compile_expression_arity_check():
    fn = compile_expression("t", ("t",))
    with pytest.raises(TypeError):
        fn(1.0, 2.0)
