import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resilient_liquidation.model import CoefficientFn, ModelParams, ProblemInstance
from resilient_liquidation.oracle import (
    N_MAX,
    NonConvex,
    QuadraticProgram,
    SingularKKT,
    check_convexity,
    discretize_problem,
    oracle_strategy,
    oracle_value,
    solve_kkt,
)
from resilient_liquidation.riccati import solve_riccati
from resilient_liquidation.strategy import value_function

from conftest import constant_model, figure1


def direct_cost(inst: ProblemInstance, xi: np.ndarray) -> float:
    """Step-by-step evaluation of the discrete cost, without any matrices."""
    m = inst.model
    N = xi.size
    dt = (m.T - inst.t0) / N
    x, y, total = inst.x0, inst.y0, 0.0
    for k in range(N):
        a, b = inst.t0 + k * dt, inst.t0 + (k + 1) * dt
        mid = 0.5 * (a + b)
        rho = m.rho(mid) if m.rho.kind == "piecewise_constant" else m.rho(a)
        if m.rho.kind == "piecewise_linear":
            rho = m.rho.integral(a, b) / dt
        x_new = x - xi[k] * dt
        if rho > 0:
            y_new = y * math.exp(-rho * dt) - m.gamma * xi[k] * math.expm1(-rho * dt) / rho
        else:
            y_new = y + m.gamma * xi[k] * dt
        if m.lam.kind == "piecewise_constant":
            lam_l = lam_r = m.lam(mid)
        else:
            lam_l, lam_r = m.lam(a), m.lam(b)
        total += 0.5 * m.eta * xi[k] ** 2 * dt
        total += xi[k] * dt * 0.5 * (y + y_new)
        total += 0.25 * dt * (lam_l * x * x + lam_r * x_new * x_new)
        x, y = x_new, y_new
    return total


def test_vwap_program():
    qp = discretize_problem(ProblemInstance(constant_model()), 8)
    np.testing.assert_allclose(qp.Q, np.eye(8) / 8, atol=1e-15)
    np.testing.assert_array_equal(qp.c, 0.0)
    np.testing.assert_allclose(qp.a, 1 / 8)
    assert qp.b == 1.0


def test_two_step_hand_assembly():
    eta, lam, x0 = 0.7, 3.0, 2.0
    inst = ProblemInstance(constant_model(eta=eta, lam=lam), x0=x0)
    qp = discretize_problem(inst, 2)
    d = 0.5
    # X1 = x0 - xi0 d, X2 = x0 - (xi0 + xi1) d; risk weight lam d / 4 on X0^2 + 2 X1^2 + X2^2
    Q = eta * d * np.eye(2) + lam * d**3 * np.array([[1.5, 0.5], [0.5, 0.5]])
    c = -lam * d**2 * x0 * np.array([1.5, 0.5])
    np.testing.assert_allclose(qp.Q, Q, rtol=1e-14)
    np.testing.assert_allclose(qp.c, c, rtol=1e-14)
    assert qp.constant == pytest.approx(lam * d * x0**2, rel=1e-14)


models = st.builds(
    lambda eta, gam, rho, lam, kind: ModelParams(
        eta, gam, 1.0,
        rho=CoefficientFn.piecewise_constant([0, 0.35, 1], [rho, 2 * rho]),
        lam=CoefficientFn.piecewise_linear([0, 1], [lam, 0.5 * lam]) if kind else CoefficientFn.constant(lam),
    ),
    st.floats(0.01, 5), st.floats(0, 50), st.floats(0, 5), st.floats(0, 5), st.booleans(),
)


@settings(max_examples=40, deadline=None)
@given(models, st.integers(2, 12), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31))
def test_quadratic_form_matches_direct_cost(model, N, x0, y0, seed):
    inst = ProblemInstance(model, 0.0, x0, y0)
    qp = discretize_problem(inst, N)
    xi = np.random.default_rng(seed).normal(size=N) * 3
    ref = direct_cost(inst, xi)
    assert qp.cost(xi) == pytest.approx(ref, rel=1e-10, abs=1e-10)
    assert np.max(np.abs(qp.Q - qp.Q.T)) <= 1e-12
    np.testing.assert_allclose(qp.x_offset + qp.x_map @ xi, x0 - np.concatenate(([0], np.cumsum(xi))) / N, atol=1e-12)


@pytest.mark.parametrize("N", [2, 7, 50])
def test_vwap_is_discrete_optimum(N):
    ds = oracle_strategy(ProblemInstance(constant_model()), N)
    np.testing.assert_allclose(ds.xi, 1.0, rtol=1e-12)
    assert ds.cost == pytest.approx(0.5, rel=1e-12)
    assert ds.X_path[-1] == 0.0


def test_ac_value():
    ref = 0.5 * 2 / math.tanh(2)
    assert oracle_value(ProblemInstance(constant_model(lam=4.0)), 1000) == pytest.approx(ref, rel=2e-3)


def test_zero_position_costs_nothing():
    assert oracle_value(ProblemInstance(figure1(0.1), x0=0.0, y0=0.0), 50) == 0.0


def test_persistent_cost_without_resilience_is_constant():
    for N in (10, 40):
        with_impact = oracle_value(ProblemInstance(constant_model(eta=0.4, gamma=6.0, lam=2.0), x0=1.5), N)
        without = oracle_value(ProblemInstance(constant_model(eta=0.4, lam=2.0), x0=1.5), N)
        assert with_impact - 0.5 * 6.0 * 1.5**2 - without == pytest.approx(0.0, abs=1e-10)


def test_doubling_convergence():
    inst = ProblemInstance(figure1(0.5))
    costs = [oracle_value(inst, n) for n in (100, 200, 400, 800)]
    gaps = np.abs(np.diff(costs))
    assert np.all(gaps[:-1] / gaps[1:] >= 1.5)


@pytest.mark.parametrize("eta, y0", [(0.5, 0.0), (0.2, 0.3)])
def test_oracle_dominance(eta, y0):
    m = figure1(eta)
    sol = solve_riccati(m)
    V = value_function(sol, 0.0, 1.0, y0)
    assert V <= oracle_value(ProblemInstance(m, y0=y0), 2000) * 1.005
    assert V == pytest.approx(oracle_value(ProblemInstance(m, y0=y0), 2000), rel=1e-2)


def test_kkt_residual_and_csv(tmp_path):
    ds = oracle_strategy(ProblemInstance(figure1(0.3)), 100)
    assert ds.residual <= 1e-9
    ds.to_csv(tmp_path / "d.csv")
    rows = (tmp_path / "d.csv").read_text().splitlines()
    assert rows[0] == "k,t_k,xi_k,X_k,Y_k"
    assert len(rows) == 102


def _qp(Q, a):
    n = len(a)
    z = np.zeros(n + 1)
    return QuadraticProgram(
        Q=np.asarray(Q, float), c=np.zeros(n), constant=0.0, a=np.asarray(a, float), b=1.0, t=np.linspace(0, 1, n + 1),
        x_offset=z, x_map=np.zeros((n + 1, n)), y_offset=z, y_map=np.zeros((n + 1, n)),
    )


def test_nonconvex_rejected():
    with pytest.raises(NonConvex):
        solve_kkt(_qp([[-1.0, 0.0], [0.0, -1.0]], [1.0, 1.0]))
    # curvature off the constraint null space does not matter
    assert check_convexity(_qp([[1.0, 0.0], [0.0, 1.0]], [1.0, 1.0])) == 0.0


def test_singular_kkt():
    with pytest.raises(SingularKKT):
        solve_kkt(_qp(np.zeros((2, 2)), [1.0, 1.0]))


def test_step_bounds():
    inst = ProblemInstance(constant_model())
    with pytest.raises(ValueError):
        discretize_problem(inst, 1)
    with pytest.raises(ValueError):
        discretize_problem(inst, N_MAX + 1)
