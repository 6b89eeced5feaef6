import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from resilient_liquidation.model import (
    R_MIN,
    BadBreakpoints,
    CoefficientFn,
    ModelParams,
    NegativeCoefficient,
    NegativeGamma,
    NonpositiveEta,
    NonpositiveHorizon,
    OutOfRange,
    ProblemInstance,
    contraction_constants,
    eval_coefficients,
    kappa,
    lipschitz_bound,
    radius,
    validate_params,
)

from conftest import constant_model, figure1


def test_figure1_parameters_are_valid():
    m = constant_model(eta=1.0, gamma=100.0, rho=1.0)
    assert validate_params(m) is m


@pytest.mark.parametrize(
    "kwargs, err",
    [
        ({"eta": 0.0}, NonpositiveEta),
        ({"eta": -1.0}, NonpositiveEta),
        ({"gamma": -0.1}, NegativeGamma),
        ({"T": 0.0}, NonpositiveHorizon),
    ],
)
def test_scalar_parameter_errors(kwargs, err):
    args = {"eta": 1.0, "gamma": 1.0, "T": 1.0} | kwargs
    with pytest.raises(err):
        validate_params(ModelParams(**args))


def test_negative_piece_rejected():
    rho = CoefficientFn.piecewise_constant([0, 0.5, 1], [1.0, -0.5])
    with pytest.raises(NegativeCoefficient, match="nonnegative"):
        validate_params(ModelParams(1.0, 1.0, 1.0, rho=rho))


@pytest.mark.parametrize(
    "fn",
    [
        CoefficientFn.piecewise_constant([0, 0.6, 0.4, 1], [1, 2, 3]),  # not increasing
        CoefficientFn.piecewise_constant([0, 0.5], [1]),  # does not reach T
        CoefficientFn.piecewise_constant([0, 0.5, 1], [1, 2, 3]),  # count mismatch
        CoefficientFn.piecewise_linear([0, 1], [1]),
        CoefficientFn("spline", (1.0,), ()),
    ],
)
def test_bad_breakpoints(fn):
    with pytest.raises(BadBreakpoints):
        validate_params(ModelParams(1.0, 0.0, 1.0, lam=fn))


def test_instance_start_must_precede_horizon():
    with pytest.raises(OutOfRange):
        ProblemInstance(constant_model(), t0=1.0)


@pytest.mark.parametrize(
    "model, expected",
    [
        (ModelParams(2.0, 1.0, 1.0, CoefficientFn.constant(1.0), CoefficientFn.constant(4.0)), 2.0),
        (constant_model(rho=3.0), 0.0),
        (constant_model(gamma=100.0, rho=1.0), math.sqrt(200.0)),
    ],
)
def test_kappa_examples(model, expected):
    assert kappa(model) == pytest.approx(expected, rel=1e-14)


def test_radius_at_figure1_parameters():
    assert radius(constant_model(gamma=100.0, rho=1.0)) == 40800.0


def test_degenerate_radius_floor():
    c = contraction_constants(constant_model())
    assert c.R == R_MIN
    assert c.delta == 0.5


def test_eval_coefficients_examples():
    m = ModelParams(
        1.0, 0.0, 1.0,
        rho=CoefficientFn.piecewise_constant([0, 0.5, 1], [1, 2]),
        lam=CoefficientFn.piecewise_linear([0, 1], [0, 4]),
    )
    assert eval_coefficients(constant_model(rho=1.0), 0.3) == (1.0, 0.0)
    rho, lam = eval_coefficients(m, 0.5)
    assert rho == 2.0
    assert eval_coefficients(m, 0.25)[1] == 1.0
    with pytest.raises(OutOfRange):
        eval_coefficients(m, 1.5)


pieces = st.lists(st.floats(0.0, 10.0), min_size=1, max_size=5)


def _pc(vals, T=1.0):
    b = np.linspace(0, T, len(vals) + 1)
    return CoefficientFn.piecewise_constant(b, vals)


def _pl(vals, T=1.0):
    b = np.linspace(0, T, len(vals) + 1)
    return CoefficientFn.piecewise_linear(b, vals + [vals[0]])


@given(pieces, st.sampled_from([_pc, _pl]), st.floats(0.0, 1.0))
def test_values_stay_within_sup(vals, make, t):
    fn = make(vals)
    assert 0.0 <= fn(t) <= fn.sup


@given(pieces, st.floats(0.01, 100), st.floats(0.0, 100))
def test_kappa_identity(vals, eta, gamma):
    m = ModelParams(eta, gamma, 1.0, rho=_pc(vals), lam=_pl(vals))
    assert kappa(m) ** 2 * eta / 2 == pytest.approx(max(m.lam.sup, gamma * m.rho.sup), rel=1e-12, abs=1e-300)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 10), st.floats(0, 100), st.floats(0.5, 2), pieces, pieces)
def test_contraction_window(eta, gamma, T, rv, lv):
    m = ModelParams(eta, gamma, T, rho=_pc(rv, T), lam=_pc(lv, T))
    c = contraction_constants(m)
    assert 0 < c.delta <= T / 2
    assert c.delta * c.L <= 0.5 * (1 + 1e-12)
    # L is evaluated on the window it certifies
    if radius(m) > 0:
        assert c.L >= lipschitz_bound(m, c.R, c.delta) * (1 - 1e-12)


@given(pieces, st.sampled_from([_pc, _pl]), st.floats(0, 1), st.floats(0, 1))
def test_integral_matches_quadrature(vals, make, a, b):
    fn = make(vals)
    a, b = min(a, b), max(a, b)
    pts = [p for p in fn.breakpoints if a < p < b]
    ref = quad(fn, a, b, points=pts or None, limit=200)[0] if b > a else 0.0
    assert fn.integral(a, b) == pytest.approx(ref, abs=1e-10)
    assert fn.integrals(np.array([a]), np.array([b]))[0] == pytest.approx(ref, abs=1e-10)


def test_spec_round_trip():
    for fn in (CoefficientFn.constant(2.5), _pc([1.0, 3.0]), _pl([0.0, 4.0])):
        assert CoefficientFn.from_spec(fn.to_dict()) == fn
