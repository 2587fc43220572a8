"""Second-order jet arithmetic checked against symbolic differentiation."""

import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from porepinn.autodiff.jets import Jet2, d2_index, d2_pairs, d2_size


def test_d2_size():
    assert d2_size(1) == 1
    assert d2_size(2) == 3
    assert d2_size(3) == 6


def test_d2_pairs_row_major_upper_triangle():
    assert d2_pairs(2) == ((0, 0), (0, 1), (1, 1))
    assert d2_pairs(3) == ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


def test_d2_index_symmetric_and_bounds():
    assert d2_index(2, 0, 1) == d2_index(2, 1, 0) == 1
    assert d2_index(3, 2, 2) == 5
    with pytest.raises(IndexError):
        d2_index(2, 0, 2)


def test_seed_jets():
    c = Jet2.constant(4.0, 3)
    assert c.value == 4.0
    assert np.all(c.d1 == 0.0) and np.all(c.d2u == 0.0)
    v = Jet2.variable(2.5, 1, 3)
    assert v.value == 2.5
    assert list(v.d1) == [0.0, 1.0, 0.0]
    assert np.all(v.d2u == 0.0)


def test_shape_validation():
    with pytest.raises(ValueError):
        Jet2(1.0, np.zeros(2), np.zeros(2))  # d2u needs 3 slots for dim 2
    with pytest.raises(ValueError):
        Jet2(1.0, np.zeros((2, 1)), np.zeros(3))


def test_dim_mismatch_rejected():
    a = Jet2.variable(1.0, 0, 2)
    b = Jet2.variable(1.0, 0, 3)
    with pytest.raises(ValueError):
        a + b


def test_full_hessian_is_symmetric():
    j = Jet2(0.0, [1.0, 2.0], [3.0, 4.0, 5.0])
    h = j.d2
    assert h[0, 1] == h[1, 0] == 4.0
    assert h[0, 0] == 3.0 and h[1, 1] == 5.0


def test_pow_rejects_bad_exponents():
    j = Jet2.variable(2.0, 0, 1)
    with pytest.raises(ValueError):
        j ** -1
    with pytest.raises(ValueError):
        j ** 0.5


def test_reciprocal_of_zero():
    with pytest.raises(ZeroDivisionError):
        Jet2.constant(0.0, 2).reciprocal()


# ---------------------------------------------------------------------------
# symbolic cross-check: drive the same expression through sympy and compare
# value, gradient, and full Hessian

X, Y = sp.symbols("x y")


def _sympy_jet(expr, x0: float, y0: float) -> Jet2:
    subs = {X: x0, Y: y0}
    val = float(expr.subs(subs))
    d1 = [float(sp.diff(expr, s).subs(subs)) for s in (X, Y)]
    d2u = [float(sp.diff(expr, a, b).subs(subs))
           for a, b in ((X, X), (X, Y), (Y, Y))]
    return Jet2(val, d1, d2u)


def _assert_jets_close(got: Jet2, want: Jet2, tol: float = 1e-12):
    scale = max(1.0, abs(want.value), float(np.max(np.abs(want.d1))),
                float(np.max(np.abs(want.d2u))))
    assert abs(got.value - want.value) <= tol * scale
    assert np.max(np.abs(got.d1 - want.d1)) <= tol * scale
    assert np.max(np.abs(got.d2u - want.d2u)) <= tol * scale


EXPRESSIONS = [
    X * Y + 3 * X - Y,
    sp.sin(X) * sp.cos(Y),
    sp.tanh(X + 2 * Y),
    (X + Y) ** 3,
    sp.exp(X) / (Y + 3),
    (X * X + 1) * sp.sin(Y) - 2 / (X + 4),
    sp.tanh(sp.sin(X) + sp.cos(Y) * X),
]


def _jet_expr(expr, jx: Jet2, jy: Jet2) -> Jet2:
    """Rebuild a sympy expression tree in jet arithmetic."""
    if expr.is_Symbol:
        return jx if expr == X else jy
    if expr.is_Number:
        return Jet2.constant(float(expr), jx.dim)
    args = [_jet_expr(a, jx, jy) for a in expr.args]
    if expr.is_Add:
        out = args[0]
        for a in args[1:]:
            out = out + a
        return out
    if expr.is_Mul:
        out = args[0]
        for a in args[1:]:
            out = out * a
        return out
    if expr.is_Pow:
        base, exponent = expr.args
        if exponent == -1:
            return args[0].reciprocal()
        return args[0] ** int(exponent)
    name = type(expr).__name__
    return getattr(args[0], {"sin": "sin", "cos": "cos", "tanh": "tanh",
                             "exp": "exp"}[name])()


@pytest.mark.parametrize("expr", EXPRESSIONS, ids=[str(e) for e in EXPRESSIONS])
def test_jet_matches_symbolic(expr):
    for x0, y0 in [(0.3, -0.7), (1.2, 0.5), (-0.9, 2.1)]:
        jx = Jet2.variable(x0, 0, 2)
        jy = Jet2.variable(y0, 1, 2)
        got = _jet_expr(expr, jx, jy)
        _assert_jets_close(got, _sympy_jet(expr, x0, y0))


@given(x0=st.floats(-2.0, 2.0), y0=st.floats(-2.0, 2.0),
       c=st.floats(-3.0, 3.0))
@settings(max_examples=60, deadline=None)
def test_product_rule_property(x0, y0, c):
    """(c + x*y) * sin(x) carries a full second-order cross term."""
    expr = (c + X * Y) * sp.sin(X)
    jx = Jet2.variable(x0, 0, 2)
    jy = Jet2.variable(y0, 1, 2)
    got = (c + jx * jy) * jx.sin()
    _assert_jets_close(got, _sympy_jet(expr.subs(sp.Symbol("c"), c), x0, y0),
                       tol=1e-11)


@given(x0=st.floats(-1.5, 1.5))
@settings(max_examples=40, deadline=None)
def test_scalar_ops_match_math(x0):
    j = Jet2.variable(x0, 0, 1)
    assert j.tanh().value == math.tanh(x0)
    assert j.sin().value == math.sin(x0)
    assert j.cos().value == math.cos(x0)
    assert j.square().value == x0 * x0
    # d/dx tanh = 1 - tanh^2, exact
    t = math.tanh(x0)
    assert abs(j.tanh().d1[0] - (1.0 - t * t)) < 1e-15


def test_division_forms_agree():
    a = Jet2.variable(1.3, 0, 2)
    b = Jet2.variable(-0.4, 1, 2) + 2.0
    left = a / b
    right = a * b.reciprocal()
    _assert_jets_close(left, right)
    scalar = 5.0 / b
    _assert_jets_close(scalar, b.reciprocal() * 5.0)
