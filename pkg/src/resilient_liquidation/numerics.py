"""Numerical kernels: terminal-clustered grids, RK4, dense solves, interpolation.

Grids are stored in time-to-go ``tau = T - t``.  Geometric clustering at T
reaches tau ~ 1e-18 * delta, far below the spacing of doubles near T, so
``t`` itself cannot be the primary coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from .model import OutOfRange


class BadGridSpec(ValueError):
    pass


class NonFiniteField(ArithmeticError):
    pass


class SingularMatrix(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """Time nodes on [t0, T] with geometric refinement inside [T - delta, T].

    ``tau`` is strictly decreasing and ends in exactly 0; ``nodes`` are the
    corresponding times (the final node is exactly T).
    """

    T: float
    tau: np.ndarray
    sing_window: float

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        if tau.ndim != 1 or tau.size < 2:
            raise BadGridSpec("grid needs at least two nodes")
        if tau[-1] != 0.0 or np.any(np.diff(tau) >= 0):
            raise BadGridSpec("time-to-go must be strictly decreasing and end at 0")
        object.__setattr__(self, "tau", tau)

    @property
    def nodes(self) -> np.ndarray:
        t = self.T - self.tau
        t[-1] = self.T
        return t

    @property
    def t0(self) -> float:
        return self.T - self.tau[0]

    def __len__(self) -> int:
        return self.tau.size

    def window_mask(self) -> np.ndarray:
        return self.tau <= self.sing_window * (1 + 1e-12)


@dataclass(frozen=True)
class SampledFunction:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape[0] != len(self.grid):
            raise ValueError(f"{v.shape[0]} samples for {len(self.grid)} nodes")
        object.__setattr__(self, "values", v)


def make_grid(t0: float, T: float, delta: float, n_regular: int, n_singular: int, ratio: float) -> TimeGrid:
    if not t0 < T:
        raise BadGridSpec(f"need t0 < T, got t0={t0}, T={T}")
    if not 0 < delta <= (T - t0) * (1 + 1e-12):
        raise BadGridSpec(f"need 0 < delta <= T - t0, got delta={delta}")
    if not 0 < ratio < 1:
        raise BadGridSpec(f"ratio must lie in (0, 1), got {ratio}")
    if n_regular < 2 or n_singular < 2:
        raise BadGridSpec("node counts must be >= 2")
    delta = min(delta, T - t0)
    regular = np.linspace(T - t0, delta, n_regular)
    if regular[0] <= delta:
        regular = regular[:1]
    singular = delta * ratio ** np.arange(1, n_singular)
    return TimeGrid(T=T, tau=np.concatenate((regular, singular, [0.0])), sing_window=delta)


def _rk4_step(field, t, y, h):
    k1 = field(t, y)
    k2 = field(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = field(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = field(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_rk4(field: Callable, t_from: float, t_to: float, y0, n_steps: int) -> np.ndarray:
    """Classical RK4 from ``t_from`` to ``t_to`` (either direction)."""
    y = np.array(y0, dtype=float)
    h = (t_to - t_from) / n_steps
    t = t_from
    for i in range(n_steps):
        y = _rk4_step(field, t, y, h)
        if not np.all(np.isfinite(y)):
            raise NonFiniteField(f"non-finite state at t={t + h}")
        t = t_from + (i + 1) * h
    return y


def integrate_rk4_adaptive(
    field: Callable,
    t_from: float,
    t_to: float,
    y0,
    scale: Callable[[np.ndarray], np.ndarray],
    tol: float = 1e-11,
    h0: float | None = None,
    max_steps: int = 200_000,
):
    """RK4 with step-doubling error control, integrating forward in ``t``.

    ``scale(y)`` gives the per-component magnitude the local error is
    measured against.  Returns the accepted nodes, the states there (after
    local Richardson extrapolation) and the last step size.
    """
    y = np.array(y0, dtype=float)
    span = t_to - t_from
    if span <= 0:
        return np.array([t_from]), y[None, :], h0
    h = min(h0 or span, span)
    ts, ys = [t_from], [y]
    t = t_from
    for _ in range(max_steps):
        if t >= t_to:
            break
        h = min(h, t_to - t)
        full = _rk4_step(field, t, y, h)
        half = _rk4_step(field, t, y, 0.5 * h)
        two = _rk4_step(field, t + 0.5 * h, half, 0.5 * h)
        if not (np.all(np.isfinite(full)) and np.all(np.isfinite(two))):
            h *= 0.25
            if h < 1e-300:
                raise NonFiniteField(f"non-finite field near t={t}")
            continue
        err = float(np.max(np.abs(two - full) / (15.0 * scale(two))))
        if err <= tol:
            t = t_to if t_to - (t + h) <= 1e-14 * abs(t_to) else t + h
            y = two + (two - full) / 15.0
            ts.append(t)
            ys.append(y)
        fac = 0.9 * (tol / err) ** 0.2 if err > 0 else 4.0
        h *= min(4.0, max(0.2, fac))
    else:
        raise NonFiniteField(f"step budget exhausted at t={t}")
    return np.array(ts), np.array(ys), h


def solve_dense_linear(A, b, rcond: float = 1e-15) -> np.ndarray:
    """LU with partial pivoting (LAPACK gesv); raises on (numerically) singular A."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ValueError(f"incompatible shapes {A.shape} and {b.shape}")
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(str(exc)) from exc
    if not np.all(np.isfinite(x)) or 1.0 / np.linalg.cond(A, 1) < rcond:
        raise SingularMatrix("matrix is singular to working precision")
    return x


def interp_eval(f: SampledFunction, t: float) -> np.ndarray:
    """Monotone piecewise-cubic (PCHIP) interpolation, exact at nodes."""
    g = f.grid
    if not g.t0 - 1e-12 * max(1.0, g.T) <= t <= g.T:
        raise OutOfRange(f"t={t} outside [{g.t0}, {g.T}]")
    tau = g.T - t
    # PCHIP wants increasing abscissae.
    x = g.tau[::-1]
    v = f.values[::-1]
    i = np.searchsorted(x, tau)
    if i < x.size and x[i] == tau:
        return np.atleast_1d(np.array(v[i], dtype=float))
    return np.atleast_1d(PchipInterpolator(x, v, axis=0)(tau))


def lagrange_cell_weights(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Weights integrating the local cubic interpolant over each cell.

    For increasing nodes ``x`` (n >= 4), returns ``(idx, w)`` with shape
    (n-1, 4) such that ``sum(w[i] * f[idx[i]])`` approximates the integral of
    f over ``[x[i], x[i+1]]`` using the 4-point stencil around the cell.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        raise ValueError("need at least 4 nodes")
    start = np.clip(np.arange(n - 1) - 1, 0, n - 4)
    idx = start[:, None] + np.arange(4)[None, :]
    width = x[1:] - x[:-1]
    s = (x[idx] - x[:-1, None]) / width[:, None]
    V = s[:, :, None] ** np.arange(4)[None, None, :]
    moments = 1.0 / np.arange(1, 5)
    w = np.linalg.solve(np.transpose(V, (0, 2, 1)), np.broadcast_to(moments, (n - 1, 4))[:, :, None])[:, :, 0]
    return idx, w * width[:, None]


def cumulative_from_zero(idx: np.ndarray, w: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Integral of f from x[0] to each node, from precomputed cell weights."""
    cells = np.einsum("ij,ij...->i...", w, f[idx])
    out = np.zeros((cells.shape[0] + 1,) + cells.shape[1:])
    np.cumsum(cells, axis=0, out=out[1:])
    return out
