"""Reference models: Almgren-Chriss, Obizhaeva-Wang and the rho = 0 reduction.

The scalar solver here shares no code with :mod:`riccati`; it is used as an
independent check of the full system when resilience vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson, solve_ivp
from scipy.interpolate import CubicSpline

from .model import CoefficientFn, ModelParams, OutOfRange
from .numerics import SampledFunction, TimeGrid
from .strategy import Trajectory, cost_of_trajectory


def _ac_ratio(kappa: float, tau: np.ndarray, T: float) -> np.ndarray:
    """sinh(kappa tau) / sinh(kappa T) without overflow."""
    if kappa * T < 1e-8:
        return tau / T
    num = -np.expm1(-2 * kappa * tau)
    den = -math.expm1(-2 * kappa * T)
    return np.exp(kappa * (tau - T)) * num / den


def almgren_chriss_trajectory(eta: float, lambda_const: float, T: float, x0: float, grid: TimeGrid) -> Trajectory:
    """Closed-form schedule without persistent impact, from the grid's first node."""
    if eta <= 0 or lambda_const < 0:
        raise ValueError("need eta > 0 and lambda >= 0")
    if abs(grid.T - T) > 1e-12 * max(1.0, T):
        raise ValueError(f"grid horizon {grid.T} differs from T={T}")
    tau = grid.tau
    span = tau[0]
    k = math.sqrt(lambda_const / eta)
    X = x0 * _ac_ratio(k, tau, span)
    if k == 0.0:
        xi = np.full_like(tau, x0 / span)
    else:
        # cosh(k tau) / sinh(k span), again in overflow-safe form
        xi = x0 * k * np.exp(k * (tau - span)) * (1 + np.exp(-2 * k * tau)) / -math.expm1(-2 * k * span)
    traj = Trajectory(t=grid.nodes, tau=tau, X=X, Y=np.zeros_like(X), xi=xi)
    model = ModelParams(eta, 0.0, T, lam=CoefficientFn.constant(lambda_const))
    traj.realized_cost = cost_of_trajectory(model, traj).total
    return traj


def ac_inventory(eta: float, lam, T: float, t0: float, x0: float, t: np.ndarray) -> np.ndarray:
    """Inventory without persistent impact; closed form for constant lambda.

    For time-varying lambda the rate is A~/eta times holdings, so
    X(t) = x0 (tau/tau0) exp(-int (A~ - eta/tau)/eta), with A~ from the
    scalar solver and the bounded integrand integrated on a fine grid.
    """
    lam = lam if isinstance(lam, CoefficientFn) else CoefficientFn.constant(lam)
    t = np.asarray(t, dtype=float)
    tau0 = T - t0
    tau = np.clip(T - t, 0.0, tau0)
    if lam.kind == "constant":
        return x0 * _ac_ratio(math.sqrt(lam.values[0] / eta), tau, tau0)
    fine = np.linspace(tau0, 0.0, 20001)
    a = a_tilde(eta, lam, T, fine[:-1])
    g = np.append((a - eta / fine[:-1]) / eta, 0.0)
    # g(0) = 0: A~ - eta/tau vanishes linearly at the horizon
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (g[:-1] + g[1:]) * (fine[:-1] - fine[1:]))))
    return x0 * (tau / tau0) * np.exp(-np.interp(tau, fine[::-1], cum[::-1]))


@dataclass(frozen=True)
class OWSchedule:
    """Two equal blocks at the ends and a constant rate in between."""

    initial_block: float
    rate: float
    terminal_block: float
    T: float

    def inventory(self, t) -> np.ndarray:
        """Holdings on the open interval (0, T); the blocks show up as jumps at the ends."""
        return self.terminal_block + self.rate * (self.T - np.asarray(t, dtype=float))


def obizhaeva_wang_schedule(rho_const: float, T: float, x0: float) -> OWSchedule:
    if rho_const < 0 or T <= 0:
        raise ValueError("need rho >= 0 and T > 0")
    block = x0 / (rho_const * T + 2)
    return OWSchedule(initial_block=block, rate=rho_const * block, terminal_block=block, T=T)


def _scalar_window(eta: float, lam: CoefficientFn, T: float, n: int = 4001):
    """Solve H' = s^2 lam - H^2/(eta s^2), H(0) = 0 on [0, delta] by Picard.

    Here H = tau^2 (A~ - eta/tau).  With |H| <= R s^2 the map is a 1/2
    contraction in sup |H|/s^2 once delta <= 3 eta / (4 R), and it maps the
    ball into itself once delta (sup lam + R^2/eta) <= 3 R.
    """
    lam_sup = lam.sup
    R = max(lam_sup * T, 1.0)
    delta = min(0.5 * T, 3 * eta / (4 * R), 3 * R / (lam_sup + R * R / eta))
    bps = [b for b in lam.interior_breakpoints() if b < T]
    if bps:
        delta = min(delta, T - max(bps))
    s = np.linspace(0.0, delta, n)
    lam_s = lam.sample(T - s)
    H = np.zeros(n)
    s2 = s * s
    for _ in range(200):
        f = s2 * lam_s
        f[1:] -= H[1:] ** 2 / (eta * s2[1:])
        new = cumulative_simpson(f, x=s, initial=0.0)
        if np.max(np.abs(new - H)) <= 1e-15 * max(1.0, np.max(np.abs(new))):
            H = new
            break
        H = new
    return s, H, delta


def _a_tilde_numeric(eta: float, lam: CoefficientFn, T: float, tau: np.ndarray) -> np.ndarray:
    s, H, delta = _scalar_window(eta, lam, T)
    out = np.empty_like(tau)
    near = tau <= delta
    # h = H / s^2 ~ lam s / 3 near 0; interpolate H / s^3 which is smooth
    q = np.empty_like(s)
    q[1:] = H[1:] / s[1:] ** 3
    q[0] = lam.on_piece(T, T - delta, T) / 3.0
    qs = CubicSpline(s, q)
    tn = tau[near]
    with np.errstate(divide="ignore"):
        out[near] = np.where(tn > 0, eta / np.where(tn > 0, tn, 1.0) + qs(tn) * tn, np.inf)
    far = np.flatnonzero(~near)
    if far.size:
        knots = sorted({delta, *(T - b for b in lam.interior_breakpoints()), float(tau[far].max())})
        knots = [k for k in knots if k >= delta]
        a = eta / delta + qs(delta) * delta
        for lo, hi in zip(knots[:-1], knots[1:]):
            def f(x, y, lo=lo, hi=hi):
                return [lam.on_piece(T - x, T - hi, T - lo) - y[0] * y[0] / eta]

            res = solve_ivp(f, (lo, hi), [a], method="DOP853", rtol=1e-12, atol=1e-12, dense_output=True)
            sel = far[(tau[far] >= lo) & (tau[far] <= hi)]
            if sel.size:
                out[sel] = res.sol(tau[sel])[0]
            a = res.y[0, -1]
    return out


def a_tilde(eta: float, lam, T: float, tau) -> np.ndarray:
    """Scalar coefficient A~ at time-to-go ``tau`` (inf at tau = 0)."""
    lam = lam if isinstance(lam, CoefficientFn) else CoefficientFn.constant(lam)
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(tau < 0) or np.any(tau > T * (1 + 1e-12)):
        raise OutOfRange("time-to-go outside [0, T]")
    if lam.kind == "constant":
        lv = lam.values[0]
        with np.errstate(divide="ignore"):
            if lv == 0.0:
                return eta / tau
            z = math.sqrt(lv / eta) * tau
            # eta/tau * z/tanh(z), with the series where tanh(z) would underflow
            small = z < 1e-4
            ratio = np.where(small, 1 + z * z / 3, z / np.tanh(np.where(small, 1.0, z)))
            return eta / tau * ratio
    return _a_tilde_numeric(eta, lam, T, tau)


def scalar_A_tilde(eta: float, lam, T: float, grid: TimeGrid) -> SampledFunction:
    return SampledFunction(grid, a_tilde(eta, lam, T, grid.tau))


def rho_zero_value(eta: float, gamma: float, lam, T: float, t: float, x: float, y: float) -> float:
    """1/2 (A~ + gamma) x^2 + x y, the value when resilience vanishes."""
    if not 0 <= t < T:
        raise OutOfRange(f"t={t} outside [0, T)")
    a = float(a_tilde(eta, lam, T, T - t)[0])
    return 0.5 * (a + gamma) * x * x + x * y


def sup_gap(X: np.ndarray, ref: np.ndarray, interior: bool = True) -> float:
    """Largest |X - ref| over the samples, skipping the end points if ``interior``."""
    d = np.abs(np.asarray(X) - np.asarray(ref))
    if interior:
        d = d[1:-1]
    return float(np.max(d)) if d.size else 0.0
