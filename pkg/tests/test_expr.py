import math

import numpy as np
import pytest
import torch
from hypothesis import assume, given, settings, strategies as st

from neurocert import expr as ex
from neurocert.expr import Interval, VectorField, diff, eval_expr, lie_derivative, parse, pretty
from neurocert.simulate import integrate

from conftest import boxes, expressions, points


# ----------------------------------------------------------------------------
# parsing


def test_parse_benchmark_dynamics_shape():
    assert parse("x0*x1 - x0", 2) == ex.Sub(ex.Mul(ex.Var(0), ex.Var(1)), ex.Var(0))


def test_parse_function_call():
    assert parse("sin(x2)", 3) == ex.Func("sin", ex.Var(2))


@pytest.mark.parametrize(
    "text, offset",
    [("x0 +", 4), ("y0", 0), ("x3", 0), ("(x0", 3), ("x0 * * x1", 5)],
)
def test_parse_errors_carry_offset(text, offset):
    with pytest.raises(ex.ParseError) as info:
        parse(text, 2)
    assert info.value.offset == offset


def test_parse_inputs_need_declaration():
    with pytest.raises(ex.ParseError):
        parse("u0 + x0", 2)
    assert parse("u0 + x0", 2, 1) == ex.Add(ex.Input(0), ex.Var(0))


def test_precedence():
    assert eval_expr(parse("-x0^2", 1), [3.0]) == -9.0
    assert eval_expr(parse("1 + 2*x0^2 - x0/4", 1), [2.0]) == 1 + 8 - 0.5
    assert eval_expr(parse("2*(x0 - 1)^3", 1), [3.0]) == 16.0


def test_rational_literal():
    assert eval_expr(parse("1/3*x0", 1), [3.0]) == pytest.approx(1.0)


# ----------------------------------------------------------------------------
# evaluation


def test_eval_examples():
    assert eval_expr(parse("x0^2 + x1^2", 2), [3, 4]) == 25
    assert eval_expr(parse("x0*x1 - x0", 2), [1, 1]) == 0
    assert eval_expr(parse("tanh(x0)", 1), [0.0]) == 0.0


def test_eval_special_functions():
    assert eval_expr(parse("sigmoid(x0)", 1), [0.0]) == 0.5
    assert eval_expr(parse("softplus(x0)", 1), [0.0]) == pytest.approx(math.log(2))
    # stable form does not overflow
    assert eval_expr(parse("softplus(x0)", 1), [800.0]) == pytest.approx(800.0)


def test_division_by_zero_is_an_error():
    with pytest.raises(ex.EvaluationError):
        eval_expr(parse("1/x0", 1), [0.0])


@settings(max_examples=50)
@given(expressions(), st.lists(points(), min_size=1, max_size=5))
def test_batch_backends_agree_with_scalar(e, pts):
    X = np.vstack(pts)
    ref = np.array([eval_expr(e, p) for p in X])
    (a,) = ex.evaluate([e], X)
    (b,) = ex.evaluate([e], torch.as_tensor(X), backend="torch")
    c = ex.compile_numpy([e])(X)[:, 0]
    for got in (np.asarray(a, float), b.numpy(), c):
        assert np.allclose(got, ref, rtol=1e-9, atol=1e-9, equal_nan=True)


# ----------------------------------------------------------------------------
# differentiation


def test_diff_examples():
    assert eval_expr(diff(parse("x0^3", 1), 0), [2.0]) == 12.0
    assert pretty(diff(parse("x0^3", 1), 0)) == "3.0*x0^2"
    assert pretty(diff(parse("tanh(x0)", 1), 0)) == "1.0 - tanh(x0)^2"
    assert diff(parse("x0*x1", 2), 1) == ex.Var(0)


def test_diff_folds_constants():
    assert diff(parse("x1^2 + 3", 2), 0) == ex.Const(0.0)


@given(expressions(), points(), st.integers(0, 2))
def test_diff_matches_central_difference(e, p, i):
    h = 1e-5
    up, dn = p.copy(), p.copy()
    up[i] += h
    dn[i] -= h
    try:
        fd = (eval_expr(e, up) - eval_expr(e, dn)) / (2 * h)
        val = eval_expr(diff(e, i), p)
    except (ex.EvaluationError, OverflowError):
        assume(False)
    assume(math.isfinite(fd) and math.isfinite(val) and abs(val) < 1e6)
    assert abs(val - fd) <= 1e-4 * (1 + abs(val))


def test_lie_derivative_examples():
    f = VectorField.parse(["-x0", "-x1"])
    L = lie_derivative(parse("x0^2 + x1^2", 2), f)
    for p in ([1.0, 2.0], [-0.3, 0.7]):
        assert eval_expr(L, p) == pytest.approx(-2 * p[0] ** 2 - 2 * p[1] ** 2)
    rot = VectorField.parse(["x1", "-x0"])
    assert eval_expr(lie_derivative(parse("x0", 2), rot), [0.2, 0.9]) == pytest.approx(0.9)


def test_lie_derivative_along_simulated_flow(rng):
    # oracle: d/dt c(x(t)) from a finely integrated trajectory
    f = VectorField.parse(["x0*x1 - x0", "-x1"])
    c = parse("x0^2 + x1^2", 2)
    L = lie_derivative(c, f)
    for p in rng.uniform(-1, 1, size=(10, 2)):
        dt = 1e-4
        tr = integrate(f, p, dt=dt, T=2 * dt)
        c_vals = [eval_expr(c, s) for s in tr.states]
        fd = (c_vals[2] - c_vals[0]) / (2 * dt)
        # re-centre at the midpoint sample
        assert eval_expr(L, tr.states[1]) == pytest.approx(fd, abs=1e-5)
        # closed form 2 x0^2 x1 - 2 x0^2 - 2 x1^2
        x0, x1 = p
        assert eval_expr(L, p) == pytest.approx(2 * x0**2 * x1 - 2 * x0**2 - 2 * x1**2)


def test_lie_derivative_needs_closed_loop():
    with pytest.raises(ValueError):
        lie_derivative(parse("x0", 1), VectorField.parse(["u0"], 1))


def test_vector_field_checks_inputs():
    with pytest.raises(ex.ParseError):
        VectorField.parse(["u0", "x0"], 0)
    assert VectorField.parse(["u0", "x0"], 1).dim_input == 1


# ----------------------------------------------------------------------------
# intervals


def test_interval_invariants():
    with pytest.raises(ValueError):
        Interval(1.0, 0.0)
    with pytest.raises(ValueError):
        Interval(-math.inf, 0.0)


def test_even_power_enclosure():
    r = ex.interval_eval(parse("x0^2", 1), [Interval(-1, 2)])
    assert r.lo == 0.0 and r.hi == pytest.approx(4.0)


def test_sine_enclosure_contains_peak():
    r = ex.interval_eval(parse("sin(x0)", 1), [Interval(0, math.pi)])
    assert r.lo == pytest.approx(0.0, abs=1e-12) and r.hi == pytest.approx(1.0)
    assert r.hi >= 1.0


def test_division_by_straddling_interval_fails():
    with pytest.raises(ex.EnclosureError):
        ex.interval_eval(parse("1/x0", 1), [Interval(-1, 2)])


@settings(max_examples=200)
@given(expressions(), boxes(), st.integers(0, 2**31 - 1))
def test_interval_enclosure_is_sound(e, box, seed):
    lo, hi = box
    try:
        r = ex.interval_eval(e, [Interval(a, b) for a, b in zip(lo, hi)])
    except (ex.EnclosureError, ValueError):
        assume(False)
    P = np.random.default_rng(seed).uniform(lo, hi, size=(200, 3))
    P = np.vstack([P, lo, hi])
    with np.errstate(all="ignore"):
        (vals,) = ex.evaluate([e], P)
    vals = np.asarray(vals, float)
    vals = vals[np.isfinite(vals)]
    assert np.all(vals >= r.lo) and np.all(vals <= r.hi)


# ----------------------------------------------------------------------------
# rounding and printing


def test_rounding_examples():
    assert pretty(ex.round_coefficients(parse("0.9999999*x0^2", 1), 1e-3)) == "x0^2"
    assert pretty(ex.round_coefficients(parse("3.14159*x0", 1), 1e-2)) == "3.14*x0"
    assert pretty(ex.round_coefficients(parse("4.9e-9*x0 + x1", 2), 1e-3)) == "x1"


@given(expressions(), st.sampled_from([1e-3, 1e-2, 0.5]))
def test_rounding_is_idempotent(e, q):
    once = ex.round_coefficients(e, q)
    assert ex.round_coefficients(once, q) == once


@given(expressions())
def test_pretty_parse_round_trip(e):
    # parsing folds constants, so the printed form is a fixed point after one pass
    again = parse(pretty(e), 3)
    text = pretty(again)
    assert pretty(parse(text, 3)) == text
    p = np.array([0.3, -0.7, 1.1])
    try:
        a, b = eval_expr(e, p), eval_expr(again, p)
    except (ex.EvaluationError, OverflowError):
        return
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12) or (math.isnan(a) and math.isnan(b))


def test_share_reuses_equal_subtrees():
    a = parse("(x0 + x1)^2 + sin(x0 + x1)", 2)
    left = a.left.base
    right = a.right.arg
    assert left is right
    assert ex.node_count([a]) < ex.node_count([ex.Add(ex.Pow(ex.Add(ex.Var(0), ex.Var(1)), 2),
                                                      ex.Func("sin", ex.Add(ex.Var(0), ex.Var(1))))]) + 3
