"""Optimal feedback strategy, forward simulation and realised costs.

The closed loop is linear, z' = M(t) z with z = (X, Y) and

    M = [[-D, E], [gamma D, -rho - gamma E]].

Between solution nodes the state is propagated with the exact exponential
of the step-averaged matrix.  The averages of D and E come from their
stored integrals, so the 1/(T - t) singularity of D is integrated exactly
and the liquidation constraint X_T = 0 is met up to the final node.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .model import OutOfRange, ProblemInstance
from .riccati import RiccatiSolution

TERMINAL_TOL = 1e-6


class TerminalMiss(RuntimeError):
    """The simulated inventory did not reach zero at the horizon."""


@dataclass(frozen=True)
class CostBreakdown:
    instantaneous: float
    persistent: float
    risk: float

    @property
    def total(self) -> float:
        return self.instantaneous + self.persistent + self.risk

    def to_dict(self) -> dict:
        return {
            "instantaneous": self.instantaneous,
            "persistent": self.persistent,
            "risk": self.risk,
            "total": self.total,
        }


@dataclass
class Trajectory:
    """State and trading rate on a time grid ending at T.

    ``tau`` is the time-to-go of each node; use it (not differences of
    ``t``) for step widths close to the horizon.
    """

    t: np.ndarray
    tau: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    xi: np.ndarray
    realized_cost: float = float("nan")
    propagated_cost: float = float("nan")

    def widths(self) -> np.ndarray:
        return self.tau[:-1] - self.tau[1:]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "X", "Y", "xi"])
            for row in zip(self.t, self.X, self.Y, self.xi):
                wr.writerow([repr(float(v)) for v in row])


def feedback_rate(sol: RiccatiSolution, t: float, x: float, y: float) -> float:
    """Optimal trading rate D(t) x - E(t) y for t < T."""
    _, _, _, D, E = sol.at(t)
    return float(D * x - E * y)


def value_function(sol: RiccatiSolution, t: float, x: float, y: float) -> float:
    """1/2 A x^2 + B x y + 1/2 C y^2."""
    A, B, C, _, _ = sol.at(t)
    return float(0.5 * A * x * x + B * x * y + 0.5 * C * y * y)


def _running_cost(eta, lam, xi, X, Y):
    return 0.5 * eta * xi * xi + xi * Y + 0.5 * lam * X * X


def cost_of_trajectory(model, traj: Trajectory) -> CostBreakdown:
    """Trapezoidal cost of a sampled trajectory."""
    w = traj.widths()

    def trap(v):
        return float(np.sum(0.5 * w * (v[:-1] + v[1:])))

    lam_l, lam_r = model.lam.endpoint_values(traj.t[:-1], traj.t[1:])
    X2 = traj.X ** 2
    risk = float(np.sum(0.25 * w * (lam_l * X2[:-1] + lam_r * X2[1:])))
    return CostBreakdown(
        instantaneous=trap(0.5 * model.eta * traj.xi ** 2),
        persistent=trap(traj.xi * traj.Y),
        risk=risk,
    )


def _step_matrices(sol: RiccatiSolution, tau: np.ndarray):
    """Step-averaged generators (times the step) for nodes with tau decreasing, tau > 0."""
    model = sol.model
    t = model.T - tau
    ireg, ie = sol.integrals(tau)
    h = tau[:-1] - tau[1:]
    int_d = np.log(tau[:-1] / tau[1:]) + ireg[:-1] - ireg[1:]
    int_e = ie[:-1] - ie[1:]
    int_r = model.rho.integrals(t[:-1], t[1:])
    int_l = model.lam.integrals(t[:-1], t[1:])
    g = model.gamma
    Mh = np.empty((h.size, 2, 2))
    Mh[:, 0, 0] = -int_d
    Mh[:, 0, 1] = int_e
    Mh[:, 1, 0] = g * int_d
    Mh[:, 1, 1] = -int_r - g * int_e
    return Mh, h, int_d / h, int_e / h, int_l / h


def _van_loan(Mh, h, d, e, lam, eta):
    """Step propagators and exact quadratic cost weights for frozen coefficients."""
    n = Mh.shape[0]
    Q = np.empty((n, 2, 2))
    Q[:, 0, 0] = 0.5 * eta * d * d + 0.5 * lam
    Q[:, 0, 1] = Q[:, 1, 0] = 0.5 * (d - eta * d * e)
    Q[:, 1, 1] = 0.5 * eta * e * e - e
    big = np.zeros((n, 4, 4))
    big[:, :2, :2] = -np.transpose(Mh, (0, 2, 1))
    big[:, :2, 2:] = Q * h[:, None, None]
    big[:, 2:, 2:] = Mh
    F = expm(big)
    P = F[:, 2:, 2:]
    W = np.einsum("nji,njk->nik", P, F[:, :2, 2:])
    return P, 0.5 * (W + np.transpose(W, (0, 2, 1)))


def _propagate(P, z0):
    Z = np.empty((P.shape[0] + 1, 2))
    Z[0] = z0
    for k in range(P.shape[0]):
        Z[k + 1] = P[k] @ Z[k]
    return Z


def _split(tau: np.ndarray, bad: np.ndarray) -> np.ndarray:
    lo, hi = tau[bad + 1], tau[bad]
    # geometric midpoints where the step spans a large ratio of time-to-go
    mid = np.where(hi > 4.0 * lo, np.sqrt(hi * lo), 0.5 * (hi + lo))
    return np.sort(np.concatenate((tau, mid)))[::-1]


def simulate_optimal(
    sol: RiccatiSolution,
    inst: ProblemInstance,
    tol: float = 1e-5,
    max_rounds: int = 12,
) -> Trajectory:
    """Closed-loop optimal trajectory from ``(inst.t0, inst.x0, inst.y0)``.

    Each step's trapezoidal cost (the quadrature used for realised costs) is
    compared with the exact cost of the frozen-coefficient step.  Until the
    summed discrepancy is below ``tol * |total|``, steps exceeding their share
    ``tol * |total| * h / (T - t0)`` are bisected; this resolves the fast
    initial layer when eta is small.
    """
    model = sol.model
    if np.isnan(sol.int_dreg[0]):
        raise ValueError("solution lacks the D and E integrals; re-solve instead of loading from CSV")
    T = model.T
    tau0 = T - inst.t0
    if tau0 > sol.tau[0] * (1 + 1e-12):
        raise OutOfRange(f"t0={inst.t0} precedes the solution grid start {sol.grid.t0}")
    tau = np.concatenate(([min(tau0, sol.tau[0])], sol.tau[(sol.tau < tau0) & (sol.tau > 0)]))
    z0 = np.array([inst.x0, inst.y0], dtype=float)
    eta = model.eta

    span = tau[0]
    for round_ in range(max_rounds + 1):
        Mh, h, d, e, lam = _step_matrices(sol, tau)
        P, W = _van_loan(Mh, h, d, e, lam, eta)
        Z = _propagate(P, z0)
        exact = np.einsum("ni,nij,nj->n", Z[:-1], W, Z[:-1])
        total = float(np.sum(exact))
        _, _, _, D, E = sol.coefficients(tau)
        xi = D * Z[:, 0] - E * Z[:, 1]
        lam_l, lam_r = model.lam.endpoint_values(T - tau[:-1], T - tau[1:])
        run_l = _running_cost(eta, lam_l, xi[:-1], Z[:-1, 0], Z[:-1, 1])
        run_r = _running_cost(eta, lam_r, xi[1:], Z[1:, 0], Z[1:, 1])
        trap = 0.5 * h * (run_l + run_r)
        err = np.abs(trap - exact)
        if err.sum() <= tol * abs(total) or round_ == max_rounds:
            break
        bad = np.flatnonzero(err > tol * abs(total) * (h / span + 1e-8))
        tau = _split(tau, bad)

    x_last, y_last = Z[-1]
    if abs(x_last) > TERMINAL_TOL * max(1.0, abs(inst.x0)):
        raise TerminalMiss(f"|X| = {abs(x_last):.3e} at tau = {tau[-1]:.3e}")
    # the residual position is sold over the last, vanishing interval
    X = np.append(Z[:, 0], 0.0)
    Y = np.append(Z[:, 1], y_last + model.gamma * x_last)
    xi = np.append(xi, xi[-1])
    tau = np.append(tau, 0.0)
    t = T - tau
    t[-1] = T
    traj = Trajectory(t=t, tau=tau, X=X, Y=Y, xi=xi, propagated_cost=total)
    traj.realized_cost = cost_of_trajectory(model, traj).total
    return traj


@dataclass(frozen=True)
class SineBump:
    """Mean-zero rate perturbation supported on [a, b].

    phi(t) = amp sin(2 pi s) with s = (t - a)/(b - a); its running integral
    Phi vanishes at both ends, so adding it keeps X_T = 0.
    """

    a: float
    b: float
    amp: float = 1.0

    @classmethod
    def interior(cls, t0: float, T: float, amp: float = 1.0, margin: float = 0.1) -> "SineBump":
        span = T - t0
        return cls(t0 + margin * span, T - margin * span, amp)

    def _s(self, t):
        return np.clip((np.asarray(t, dtype=float) - self.a) / (self.b - self.a), 0.0, 1.0)

    def phi(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= self.a) & (t <= self.b)
        return np.where(inside, self.amp * np.sin(2 * math.pi * self._s(t)), 0.0)

    def Phi(self, t):
        return self.amp * (self.b - self.a) / (2 * math.pi) * (1.0 - np.cos(2 * math.pi * self._s(t)))


def impact_response(model, bump: SineBump, t: np.ndarray) -> np.ndarray:
    """Psi solving Psi' = -rho Psi + gamma phi, Psi(t[0]) = 0, sampled at t."""
    if model.gamma == 0.0:
        return np.zeros_like(t)
    # times near T coincide in floating point; integrate on the distinct ones
    ts, inv = np.unique(t, return_inverse=True)
    out = np.zeros_like(ts)
    knots = sorted({float(ts[0]), float(ts[-1]), bump.a, bump.b, *model.rho.breakpoints})
    knots = [k for k in knots if ts[0] <= k <= ts[-1]]
    psi = 0.0
    for lo, hi in zip(knots[:-1], knots[1:]):
        sel = (ts >= lo) & (ts <= hi)
        fn = lambda s, y, lo=lo, hi=hi: -model.rho.on_piece(s, lo, hi) * y + model.gamma * bump.phi(s)
        res = solve_ivp(fn, (lo, hi), [psi], rtol=1e-12, atol=1e-14, method="DOP853", dense_output=True)
        if sel.any():
            out[sel] = res.sol(ts[sel])[0]
        psi = res.y[0, -1]
    return out[inv]


def perturbed(model, traj: Trajectory, eps: float, bump: SineBump) -> Trajectory:
    """Open-loop perturbation xi* + eps phi of a sampled trajectory."""
    psi = impact_response(model, bump, traj.t)
    out = Trajectory(
        t=traj.t,
        tau=traj.tau,
        X=traj.X - eps * bump.Phi(traj.t),
        Y=traj.Y + eps * psi,
        xi=traj.xi + eps * bump.phi(traj.t),
    )
    out.realized_cost = cost_of_trajectory(model, out).total
    return out
