"""Brute-force discrete oracle.

Controls are piecewise constant on N uniform steps.  The inventory is exact
for such controls; the impact state is propagated exactly with resilience
frozen on each step, and the running cost is a trapezoid in (X, Y) and exact
in xi.  The cost is a quadratic 1/2 xi'Q xi + c'xi + const subject to the
single linear constraint sum(xi) * dt = x0, solved through its KKT system.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import ProblemInstance
from .numerics import SingularMatrix, solve_dense_linear

N_MAX = 4000


class SingularKKT(np.linalg.LinAlgError):
    pass


class NonConvex(ValueError):
    pass


@dataclass
class QuadraticProgram:
    Q: np.ndarray
    c: np.ndarray
    constant: float
    a: np.ndarray
    b: float
    t: np.ndarray
    # affine maps xi -> paths, kept for reconstruction
    x_offset: np.ndarray
    x_map: np.ndarray
    y_offset: np.ndarray
    y_map: np.ndarray

    @property
    def n(self) -> int:
        return self.c.size

    def cost(self, xi: np.ndarray) -> float:
        return float(0.5 * xi @ self.Q @ xi + self.c @ xi + self.constant)


@dataclass
class DiscreteStrategy:
    t: np.ndarray
    xi: np.ndarray
    cost: float
    X_path: np.ndarray
    Y_path: np.ndarray
    residual: float = 0.0

    def step_average_from(self, t_grid: np.ndarray, X_grid: np.ndarray) -> np.ndarray:
        """Average rate of a continuous path over the oracle steps."""
        dt = np.diff(self.t)
        X = np.interp(self.t, t_grid, X_grid)
        return (X[:-1] - X[1:]) / dt

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["k", "t_k", "xi_k", "X_k", "Y_k"])
            xi = np.append(self.xi, np.nan)
            for k, row in enumerate(zip(self.t, xi, self.X_path, self.Y_path)):
                wr.writerow([k] + [repr(float(v)) for v in row])


def discretize_problem(inst: ProblemInstance, N: int) -> QuadraticProgram:
    if N < 2:
        raise ValueError("need N >= 2")
    if N > N_MAX:
        raise ValueError(f"N={N} exceeds the dense-assembly cap {N_MAX}")
    m = inst.model
    t0, T, x0, y0 = inst.t0, m.T, inst.x0, inst.y0
    dt = (T - t0) / N
    t = t0 + dt * np.arange(N + 1)
    t[-1] = T
    lo, hi = t[:-1], t[1:]

    rho = m.rho.endpoint_values(lo, hi)[0]
    decay = np.exp(-rho * dt)
    gain = np.where(rho > 0, -np.expm1(-rho * dt) / np.where(rho > 0, rho, 1.0), dt) * m.gamma

    # cumulative log-decay: Y_k carries exp(-(cum[k] - cum[j+1])) of xi_j
    cum = np.concatenate(([0.0], np.cumsum(rho * dt)))
    y_offset = y0 * np.exp(-cum)
    k = np.arange(N + 1)[:, None]
    j = np.arange(N)[None, :]
    expo = np.where(k > j, cum[:, None] - cum[None, 1:], np.inf)
    y_map = np.exp(-expo) * gain[None, :]

    x_offset = np.full(N + 1, float(x0))
    x_map = -dt * (k > j).astype(float)

    # instantaneous part: 1/2 eta xi^2 dt per step
    Q = m.eta * dt * np.eye(N)
    # cross part: xi_k dt (Y_k + Y_{k+1}) / 2
    M = 0.5 * dt * (y_map[:-1] + y_map[1:])
    Q += M + M.T
    c = 0.5 * dt * (y_offset[:-1] + y_offset[1:])
    # risk part: dt/4 (lam_l X_k^2 + lam_r X_{k+1}^2)
    lam_l, lam_r = m.lam.endpoint_values(lo, hi)
    w = np.zeros(N + 1)
    w[:-1] += 0.25 * dt * lam_l
    w[1:] += 0.25 * dt * lam_r
    Q += 2.0 * x_map.T @ (w[:, None] * x_map)
    c += 2.0 * x_map.T @ (w * x_offset)
    const = float(np.sum(w * x_offset ** 2))

    Q = 0.5 * (Q + Q.T)
    return QuadraticProgram(
        Q=Q, c=c, constant=const, a=np.full(N, dt), b=float(x0), t=t,
        x_offset=x_offset, x_map=x_map, y_offset=y_offset, y_map=y_map,
    )


def _projected_hessian(Q: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Q restricted to {a' v = 0} in an orthonormal (Householder) basis."""
    n = a.size
    v = a / np.linalg.norm(a)
    u = v.copy()
    u[0] -= 1.0
    nu = np.linalg.norm(u)
    if nu == 0.0:
        return Q[1:, 1:]
    u /= nu
    # H = I - 2 u u' maps e_1 to v; its other columns span the null space
    Qu = Q @ u
    HQH = Q - 2 * np.outer(u, Qu) - 2 * np.outer(Qu, u) + 4 * (u @ Qu) * np.outer(u, u)
    return HQH[1:, 1:] if n > 1 else HQH[:0, :0]


def check_convexity(qp: QuadraticProgram, tol: float = 1e-9) -> float:
    """Smallest eigenvalue bound of the projected Hessian; raises NonConvex below -tol."""
    P = _projected_hessian(qp.Q, qp.a)
    if P.size == 0:
        return 0.0
    try:
        np.linalg.cholesky(P + tol * np.eye(P.shape[0]))
        return 0.0
    except np.linalg.LinAlgError:
        lmin = float(np.linalg.eigvalsh(P)[0])
        if lmin < -tol:
            raise NonConvex(f"projected Hessian has eigenvalue {lmin:.3e}")
        return lmin


def solve_kkt(qp: QuadraticProgram) -> DiscreteStrategy:
    check_convexity(qp)
    n = qp.n
    K = np.zeros((n + 1, n + 1))
    K[:n, :n] = qp.Q
    K[:n, n] = qp.a
    K[n, :n] = qp.a
    rhs = np.concatenate((-qp.c, [qp.b]))
    try:
        sol = solve_dense_linear(K, rhs)
    except SingularMatrix as exc:
        raise SingularKKT(str(exc)) from exc
    res = float(np.linalg.norm(K @ sol - rhs))
    if res > 1e-9 * max(np.linalg.norm(rhs), 1e-300):
        raise SingularKKT(f"KKT residual {res:.3e} too large")
    xi = sol[:n]
    X = qp.x_offset + qp.x_map @ xi
    X[-1] = 0.0
    Y = qp.y_offset + qp.y_map @ xi
    return DiscreteStrategy(t=qp.t, xi=xi, cost=qp.cost(xi), X_path=X, Y_path=Y, residual=res)


def oracle_value(inst: ProblemInstance, N: int) -> float:
    return solve_kkt(discretize_problem(inst, N)).cost


def oracle_strategy(inst: ProblemInstance, N: int) -> DiscreteStrategy:
    return solve_kkt(discretize_problem(inst, N))
