"""Shared hypothesis strategies and fixtures."""

import numpy as np
import pytest
from hypothesis import settings, strategies as st

from neurocert import expr as ex

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

UNARY = ("sin", "cos", "exp", "tanh", "sigmoid", "softplus")


def _leaf(dim):
    return st.one_of(
        st.integers(0, dim - 1).map(ex.Var),
        st.floats(-3, 3, allow_nan=False).map(lambda c: ex.Const(round(c, 3))),
    )


def _extend(children):
    binary = st.tuples(st.sampled_from(("add", "sub", "mul")), children, children).map(
        lambda t: {"add": ex.Add, "sub": ex.Sub, "mul": ex.Mul}[t[0]](t[1], t[2])
    )
    # denominators bounded away from zero
    safe_div = st.tuples(children, children).map(lambda t: ex.Div(t[0], ex.Add(ex.Const(1.5), ex.Pow(t[1], 2))))
    power = st.tuples(children, st.integers(0, 4)).map(lambda t: ex.Pow(t[0], t[1]))
    neg = children.map(ex.Neg)
    func = st.tuples(st.sampled_from(UNARY), children).map(lambda t: ex.Func(t[0], t[1]))
    return st.one_of(binary, safe_div, power, neg, func)


def expressions(dim=3, max_leaves=12):
    return st.recursive(_leaf(dim), _extend, max_leaves=max_leaves)


def points(dim=3, lo=-2.0, hi=2.0):
    return st.lists(st.floats(lo, hi, allow_nan=False), min_size=dim, max_size=dim).map(np.array)


@st.composite
def boxes(draw, dim=3, lo=-2.0, hi=2.0, max_width=1.5):
    a = np.array(draw(st.lists(st.floats(lo, hi, allow_nan=False), min_size=dim, max_size=dim)))
    w = np.array(draw(st.lists(st.floats(0, max_width, allow_nan=False), min_size=dim, max_size=dim)))
    return a, a + w


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
