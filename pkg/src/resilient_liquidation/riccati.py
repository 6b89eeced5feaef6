"""Singular Riccati system for the value-function coefficients.

With V(t, x, y) = 1/2 A x^2 + B x y + 1/2 C y^2 the coefficients solve, in
time-to-go tau = T - t,

    A' = lambda - (A - gamma B)^2 / eta
    B' = -rho B + (gamma C - B + 1)(A - gamma B) / eta
    C' = -2 rho C - (gamma C - B + 1)^2 / eta

with (A, B, C) -> (inf, 1, 0) as tau -> 0.  Near the terminal time we
write H = tau^2 h, G = tau^2 g, P = tau^2 p and

    A = eta/tau + H/tau^2 = eta/tau + h,  B = 1 + G/tau = 1 + tau g,  C = P,

and solve for the bounded normalised unknowns (h, g, p) by Picard iteration
on [T - delta, T].  The result is then extended to [t0, T - delta] by adaptive RK4.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .model import (
    ContractionConstants,
    ModelParams,
    OutOfRange,
    contraction_constants,
    kappa,
    validate_params,
)
from .numerics import (
    TimeGrid,
    cumulative_from_zero,
    integrate_rk4_adaptive,
    lagrange_cell_weights,
    make_grid,
)


class SolverError(RuntimeError):
    pass


class NoContraction(SolverError):
    pass


class BlowUp(SolverError):
    pass


@dataclass(frozen=True)
class TransformedState:
    h_hat: float
    g_hat: float
    p_hat: float


@dataclass(frozen=True)
class SolverConfig:
    t0: float = 0.0
    n_regular: int = 200
    n_singular: int = 60
    ratio: float = 0.5
    picard_substeps: int = 8
    picard_tol: float = 1e-13
    picard_max_iter: int = 60
    ode_tol: float = 1e-11
    delta_override: float | None = None
    max_halvings: int = 6


# --------------------------------------------------------------------------
# transformed driver


def _driver(model: ModelParams, tau, h, g, p, rho, lam):
    """Driver of the (H, G, P) system at H = tau^2 h, G = tau^2 g, P = tau^2 p.

    Vectorised over ``tau``; the 1/tau factors are cancelled by hand, so
    every term carries at least one factor tau and the value is 0 at T.
    """
    eta, gam = model.eta, model.gamma
    u = h - gam - gam * tau * g  # (H/tau - gamma (tau + G)) / tau
    w = gam * tau * p - g  # (gamma P - G/tau) / tau
    t2 = tau * tau
    f1 = t2 * lam - t2 * u * u / eta + 2.0 * gam * tau * (1.0 + tau * g)
    f2 = -rho * tau * (1.0 + tau * g) + t2 * w * u / eta + gam * t2 * p
    f3 = -2.0 * rho * t2 * p - t2 * w * w / eta
    return f1, f2, f3


def transformed_driver(model: ModelParams, t: float, s: TransformedState) -> np.ndarray:
    tau = model.T - t
    if tau < 0:
        raise OutOfRange(f"t={t} beyond T={model.T}")
    if tau == 0:
        return np.zeros(3)
    rho, lam = model.rho(t), model.lam(t)
    return np.array(_driver(model, tau, s.h_hat, s.g_hat, s.p_hat, rho, lam), dtype=float)


# --------------------------------------------------------------------------
# near-terminal Picard phase


@dataclass
class NearTerminalSolution:
    """Fixed point on the refined window nodes, tau ascending from 0."""

    tau: np.ndarray
    yhat: np.ndarray  # (n, 3); row 0 (tau = 0) holds the limit extrapolation
    delta: float
    iterations: int
    ratios: list[float]
    increments: list[float]
    idx: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)


def _refine_window(window_tau_desc: np.ndarray, substeps: int) -> np.ndarray:
    x = np.asarray(window_tau_desc, dtype=float)[::-1]  # ascending, starts at 0
    pieces = [x[:1]]
    for a, b in zip(x[:-1], x[1:]):
        pieces.append(a + (b - a) * np.arange(1, substeps + 1) / substeps)
    out = np.concatenate(pieces)
    out[-1] = x[-1]
    return out


def solve_near_terminal(
    model: ModelParams,
    consts: ContractionConstants,
    grid: TimeGrid,
    tol: float = 1e-13,
    substeps: int = 8,
    max_iter: int = 60,
) -> NearTerminalSolution:
    T = model.T
    window = grid.tau[grid.window_mask()]
    delta = float(window[0])
    x = _refine_window(window, substeps)
    idx, w = lagrange_cell_weights(x)
    t = T - x
    lo, hi = T - delta, T
    rho = np.array([model.rho.on_piece(s, lo, hi) for s in t])
    lam = np.array([model.lam.on_piece(s, lo, hi) for s in t])

    yhat = np.zeros((x.size, 3))
    ratios: list[float] = []
    increments: list[float] = []
    above_one = 0
    iterations = 0
    inner = slice(1, None)
    for k in range(1, max_iter + 1):
        iterations = k
        f = np.stack(_driver(model, x, yhat[:, 0], yhat[:, 1], yhat[:, 2], rho, lam), axis=1)
        f[0] = 0.0
        Y = cumulative_from_zero(idx, w, f)
        new = np.empty_like(yhat)
        new[inner] = Y[inner] / (x[inner, None] ** 2)
        new[0] = new[1]
        inc = float(np.max(np.abs(new[inner] - yhat[inner])))
        norm = float(np.max(np.abs(new[inner])))
        yhat = new
        if not np.isfinite(norm) or norm > consts.R * (1 + 1e-9):
            raise NoContraction(f"iterate left the ball of radius {consts.R:.6g} (norm {norm:.6g})")
        floor = 1e-11 * max(1.0, norm)
        if increments and increments[-1] > floor and inc > floor:
            r = inc / increments[-1]
            ratios.append(r)
            above_one = above_one + 1 if r > 1.0 else 0
            if above_one >= 2:
                raise NoContraction(f"increment ratio {r:.3g} > 1 twice in a row (delta={delta:.3g})")
        increments.append(inc)
        if inc <= tol * max(1.0, norm):
            break
    # tau = 0 row: quadratic extrapolation from the first three interior nodes
    if x.size > 3:
        for j in range(3):
            yhat[0, j] = np.polyval(np.polyfit(x[1:4], yhat[1:4, j], 2), 0.0)
    return NearTerminalSolution(x, yhat, delta, iterations, ratios, increments, idx, w)


# --------------------------------------------------------------------------
# backward extension


def _a_priori_caps(model: ModelParams, tau: float) -> tuple[float, float, float]:
    k = kappa(model)
    dbar = k / math.tanh(k * tau) if k > 0 else 1.0 / tau
    cap_a = model.eta * dbar + model.gamma  # A = eta D + gamma B
    cap_c = 1.0 / model.gamma if model.gamma > 0 else model.T / model.eta
    return cap_a, 1.0, cap_c


def _extension_field(model: ModelParams, lo: float, hi: float):
    """(A, B, C, int(D - 1/tau), int E) as functions of tau on one coefficient piece."""
    eta, gam, T = model.eta, model.gamma, model.T
    rho_fn, lam_fn = model.rho, model.lam

    def f(tau, y):
        t = T - tau
        rho = rho_fn.on_piece(t, lo, hi)
        lam = lam_fn.on_piece(t, lo, hi)
        a, b, c = y[0], y[1], y[2]
        d = (a - gam * b) / eta
        e = (gam * c - b + 1.0) / eta
        return np.array(
            [
                lam - eta * d * d,
                -rho * b + eta * e * d,
                -2.0 * rho * c - eta * e * e,
                d - 1.0 / tau,
                e,
            ]
        )

    return f


def extend_backward(
    model: ModelParams,
    boundary,
    grid: TimeGrid,
    tol: float = 1e-11,
):
    """Integrate from T - delta back to the first grid node.

    ``boundary`` is (A, B, C) or (A, B, C, int_Dreg, int_E) at tau = delta.
    Returns (tau_desc, states) on the union of grid nodes, coefficient
    breakpoints and accepted RK4 steps; states has 5 columns.
    """
    T = model.T
    delta = grid.sing_window
    tau_end = float(grid.tau[0])
    y = np.zeros(5)
    y[: len(boundary)] = boundary
    if tau_end <= delta * (1 + 1e-12):
        return np.array([delta]), y[None, :]

    eta, gam = model.eta, model.gamma
    floor = np.array(
        [
            1e-3 * (eta / T + gam),
            1e-3,
            1e-3 * (1.0 / gam if gam > 0 else T / eta),
            1.0,
            1e-3 / eta,
        ]
    )

    def scale(v):
        return np.maximum(np.abs(v), floor)

    targets = set(grid.tau[grid.tau > delta * (1 + 1e-12)].tolist())
    targets |= {T - b for b in model.breakpoints() if delta < T - b < tau_end}
    targets.add(tau_end)
    stops = sorted(targets)
    bps = sorted({T - b for b in model.breakpoints()} | {0.0, T})

    taus, states = [delta], [y]
    tau, h = delta, 0.05 * delta
    for stop in stops:
        # coefficient piece covering (tau, stop) in time-to-go
        j = int(np.searchsorted(bps, 0.5 * (tau + stop)))
        lo_tau, hi_tau = bps[max(j - 1, 0)], bps[min(j, len(bps) - 1)]
        fld = _extension_field(model, T - hi_tau, T - lo_tau)
        ts, ys, h = integrate_rk4_adaptive(fld, tau, stop, y, scale, tol=tol, h0=h)
        cap = _a_priori_caps(model, stop)
        last = ys[-1]
        if abs(last[0]) > 10 * cap[0] or abs(last[1]) > 10 * cap[1] or abs(last[2]) > 10 * cap[2]:
            raise BlowUp(f"extension left 10x a priori bounds at tau={stop:.6g}: A,B,C={last[:3]}")
        taus.extend(ts[1:].tolist())
        states.extend(list(ys[1:]))
        tau, y = stop, last
        h = h if h and h > 0 else 0.05 * tau
    return np.array(taus)[::-1], np.array(states)[::-1]


# --------------------------------------------------------------------------
# full solve


@dataclass
class RiccatiSolution:
    """Sampled (A, B, C, D, E) on a grid clustered at T.

    The node t = T stores the limits A = D = inf, B = 1, C = E = 0.
    ``areg = A - eta/tau`` and ``dreg = D - 1/tau`` are the bounded parts,
    computed without cancellation inside the singular window.
    ``int_dreg`` and ``int_e`` are integrals from T back to each node.
    """

    model: ModelParams
    grid: TimeGrid
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    areg: np.ndarray
    dreg: np.ndarray
    int_dreg: np.ndarray
    int_e: np.ndarray
    delta: float
    yhat: np.ndarray | None = None
    geometric: np.ndarray | None = None
    picard_iterations: int = 0
    contraction_ratios: list[float] = field(default_factory=list)
    halvings: int = 0
    _interp: "_PiecewiseHermite | None" = field(default=None, repr=False)

    @property
    def tau(self) -> np.ndarray:
        return self.grid.tau

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    def _slopes(self, idx: np.ndarray, t_lo: float, t_hi: float) -> np.ndarray:
        """d/dtau of (areg, B, C, dreg, E) at nodes ``idx`` of one coefficient piece.

        Taken from the Riccati system and written in terms of dreg so no
        1/tau^2 terms cancel.  Close to T the stored dreg loses relative
        accuracy, so monotone finite-difference slopes are used there.
        """
        m = self.model
        tau, eta, g = self.tau[idx], m.eta, m.gamma
        t = m.T - tau
        rho = np.array([m.rho.on_piece(x, t_lo, t_hi) for x in t])
        lam = np.array([m.lam.on_piece(x, t_lo, t_hi) for x in t])
        B, C, D, E, dr = self.B[idx], self.C[idx], self.D[idx], self.E[idx], self.dreg[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            b_t = -rho * B + eta * E * D
            c_t = -2 * rho * C - eta * E * E
            exact = np.stack([
                lam - eta * (2 * dr / tau + dr * dr),
                b_t,
                c_t,
                (lam - g * b_t) / eta - (2 * dr / tau + dr * dr),
                (g * c_t - b_t) / eta,
            ], axis=1)
        cols = np.stack([self.areg[idx], B, C, dr, E], axis=1)
        fd = PchipInterpolator(tau[::-1], cols[::-1], axis=0).derivative()(tau[::-1])[::-1]
        pos = tau >= max(self.delta, 1e-6 * m.T)
        return np.where(pos[:, None], exact, fd)

    def _interpolator(self) -> "_PiecewiseHermite":
        if self._interp is None:
            m = self.model
            cuts = sorted({0.0, m.T, *m.breakpoints()})
            pieces = []
            for t_lo, t_hi in zip(cuts[:-1], cuts[1:]):
                # nodes of this coefficient piece, both ends included
                sel = np.flatnonzero((self.t >= t_lo - 1e-14) & (self.t <= t_hi + 1e-14) & (self.tau <= self.tau[0]))
                if self.tau[-1] == 0.0 and t_hi == m.T:
                    sel = np.union1d(sel, [self.tau.size - 1])
                if sel.size < 2:
                    continue
                cols = np.stack([self.areg[sel], self.B[sel], self.C[sel], self.dreg[sel], self.E[sel]], axis=1)
                sl = self._slopes(sel, t_lo, t_hi)
                pieces.append(CubicHermiteSpline(self.tau[sel][::-1], cols[::-1], sl[::-1], axis=0))
            self._interp = _PiecewiseHermite(pieces)
        return self._interp

    def coefficients(self, tau: np.ndarray) -> tuple[np.ndarray, ...]:
        """Vectorised (A, B, C, D, E) at time-to-go values ``tau > 0``."""
        tau = np.asarray(tau, dtype=float)
        v = self._interpolator()(tau)
        return (self.model.eta / tau + v[..., 0], v[..., 1], v[..., 2], 1.0 / tau + v[..., 3], v[..., 4])

    def integrals(self, tau: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """int_0^tau (D - 1/s) ds and int_0^tau E ds at arbitrary tau.

        Exact stored values at nodes; inside a cell the antiderivative of the
        interpolant of D and E is added, with the cell mismatch spread
        linearly so the result stays continuous.
        """
        tau = np.asarray(tau, dtype=float)
        x = self.tau[::-1]
        F = np.stack([self.int_dreg[::-1], self.int_e[::-1]], axis=1)
        j = np.clip(np.searchsorted(x, tau, side="right") - 1, 0, x.size - 2)
        xl, xr = x[j], x[j + 1]
        interp = self._interpolator()
        seg = interp.segment(0.5 * (xl + xr))
        Pl, Pr, Pt = (interp.antiderivative(v, seg)[..., 3:] for v in (xl, xr, tau))
        s = ((tau - xl) / (xr - xl))[..., None]
        v = F[j] + (Pt - Pl) + s * (F[j + 1] - F[j] - (Pr - Pl))
        return v[..., 0], v[..., 1]

    def at(self, t: float) -> tuple[float, float, float, float, float]:
        """Interpolated (A, B, C, D, E) at time t < T."""
        tau = self.model.T - t
        if not 0 < tau <= self.tau[0] * (1 + 1e-12):
            raise OutOfRange(f"t={t} outside [{self.grid.t0}, T)")
        i = np.searchsorted(-self.tau, -tau)
        if i < self.tau.size and self.tau[i] == tau:
            return self.A[i], self.B[i], self.C[i], self.D[i], self.E[i]
        areg, b, c, dreg, e = self._interpolator()(tau)
        return self.model.eta / tau + areg, b, c, 1.0 / tau + dreg, e

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "A", "B", "C", "D", "E", "tau"])
            for row in zip(self.t, self.A, self.B, self.C, self.D, self.E, self.tau):
                wr.writerow([_fmt(v) for v in row])

    @classmethod
    def from_csv(cls, path, model: ModelParams) -> "RiccatiSolution":
        """Load a solution file; only the sampled columns are recovered."""
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        col = {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}
        tau = col["tau"] if "tau" in col else model.T - col["t"]
        keep = np.concatenate(([True], np.diff(tau) < 0))
        tau = tau[keep]
        tau[-1] = 0.0
        grid = TimeGrid(T=model.T, tau=tau, sing_window=0.0)
        A, B, C, D, E = (col[k][keep] for k in "ABCDE")
        with np.errstate(divide="ignore", invalid="ignore"):
            areg = np.where(tau > 0, A - model.eta / tau, np.nan)
            dreg = np.where(tau > 0, D - 1.0 / tau, np.nan)
        return cls(model, grid, A, B, C, D, E, areg, dreg, np.full_like(tau, np.nan),
                   np.full_like(tau, np.nan), delta=0.0)


class _PiecewiseHermite:
    """Cubic Hermite interpolants joined at coefficient breakpoints (in tau)."""

    def __init__(self, pieces: list[CubicHermiteSpline]):
        self.pieces = sorted(pieces, key=lambda p: p.x[0])
        self.starts = np.array([p.x[0] for p in self.pieces])
        self._anti = [p.antiderivative() for p in self.pieces]

    def segment(self, x) -> np.ndarray:
        return np.clip(np.searchsorted(self.starts, x, side="right") - 1, 0, len(self.pieces) - 1)

    def _eval(self, fns, x, seg):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape + (5,))
        for i in np.unique(seg):
            mask = seg == i
            out[mask] = fns[i](x[mask])
        return out

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            return self(x[None])[0]
        return self._eval(self.pieces, x, self.segment(x))

    def antiderivative(self, x, seg):
        return self._eval(self._anti, x, np.asarray(seg))


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def _effective_delta(model: ModelParams, consts: ContractionConstants, config: SolverConfig) -> float:
    T = model.T
    delta = consts.delta
    if config.delta_override is not None:
        delta = min(delta, config.delta_override)
    bps = model.breakpoints()
    if bps:
        # keep the Picard window inside the last coefficient piece
        delta = min(delta, T - max(bps))
    return min(delta, T - config.t0)


def solve_riccati(model: ModelParams, config: SolverConfig | None = None) -> RiccatiSolution:
    config = config or SolverConfig()
    validate_params(model)
    consts = contraction_constants(model)
    delta = _effective_delta(model, consts, config)
    for halving in range(config.max_halvings + 1):
        grid = make_grid(config.t0, model.T, delta, config.n_regular, config.n_singular, config.ratio)
        try:
            near = solve_near_terminal(
                model, consts, grid, config.picard_tol, config.picard_substeps, config.picard_max_iter
            )
            break
        except NoContraction:
            if halving == config.max_halvings:
                raise
            delta *= 0.5
    return _assemble(model, config, grid, near, halving)


def _assemble(model, config, grid, near: NearTerminalSolution, halvings: int) -> RiccatiSolution:
    eta, gam = model.eta, model.gamma
    x = near.tau  # ascending, x[0] = 0
    h, g, p = near.yhat[:, 0], near.yhat[:, 1], near.yhat[:, 2]

    dreg_w = (h - gam - gam * x * g) / eta
    e_w = (gam * x * x * p - x * g) / eta
    ints = cumulative_from_zero(near.idx, near.w, np.stack([dreg_w, e_w], axis=1))

    delta = near.delta
    bnd = (eta / delta + h[-1], 1.0 + delta * g[-1], delta * delta * p[-1], ints[-1, 0], ints[-1, 1])
    tau_r, states = extend_backward(model, bnd, grid, tol=config.ode_tol)
    tau_r, states = tau_r[:-1], states[:-1]  # tau = delta comes from the window

    with np.errstate(divide="ignore"):
        inv = np.where(x > 0, 1.0 / np.where(x > 0, x, 1.0), np.inf)
    A_w = eta * inv + h
    B_w = 1.0 + x * g
    C_w = x * x * p

    tau = np.concatenate((tau_r, x[::-1]))
    A = np.concatenate((states[:, 0], A_w[::-1]))
    B = np.concatenate((states[:, 1], B_w[::-1]))
    C = np.concatenate((states[:, 2], C_w[::-1]))
    B[-1], C[-1] = 1.0, 0.0
    with np.errstate(invalid="ignore"):
        D = (A - gam * B) / eta
        E = (gam * C - B + 1.0) / eta
    D[-1], E[-1] = np.inf, 0.0
    areg = np.concatenate((states[:, 0] - eta / tau_r, h[::-1]))
    dreg = np.concatenate((D[: tau_r.size] - 1.0 / tau_r, dreg_w[::-1]))
    int_dreg = np.concatenate((states[:, 3], ints[::-1, 0]))
    int_e = np.concatenate((states[:, 4], ints[::-1, 1]))
    yhat = np.full((tau.size, 3), np.nan)
    yhat[tau_r.size:] = near.yhat[::-1]

    dense = TimeGrid(T=model.T, tau=tau, sing_window=delta)
    geo = np.flatnonzero(np.isin(tau, grid.tau[grid.window_mask()]))
    return RiccatiSolution(
        model=model, grid=dense, A=A, B=B, C=C, D=D, E=E, areg=areg, dreg=dreg,
        int_dreg=int_dreg, int_e=int_e, delta=delta, yhat=yhat, geometric=geo,
        picard_iterations=near.iterations, contraction_ratios=list(near.ratios), halvings=halvings,
    )


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class CheckResult:
    name: str
    worst_margin: float
    location_t: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "worst_margin": self.worst_margin,
            "location_t": self.location_t,
            "pass": self.passed,
        }


@dataclass
class ValidationReport:
    checks: list[CheckResult]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {"tolerance": self.tolerance, "pass": self.passed, "checks": [c.to_dict() for c in self.checks]}


def _margin_check(name, t, value, bound, tol, upper: bool) -> CheckResult:
    """Scaled slack (value - bound) / max(1, |bound|), sign-flipped for upper bounds."""
    diff = (bound - value) if upper else (value - bound)
    with np.errstate(invalid="ignore"):
        m = diff / np.maximum(1.0, np.abs(bound))
    m = np.where(np.isnan(m), -np.inf, m)
    i = int(np.argmin(m))
    worst = float(m[i])
    return CheckResult(name, worst, float(t[i]), bool(worst >= -tol))


def d_bounds(model: ModelParams, tau: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic lower/upper envelopes of D, with their removable limits."""
    a = model.gamma / model.eta
    k = kappa(model)
    with np.errstate(over="ignore"):
        lower = a / np.expm1(a * tau) if a > 0 else 1.0 / tau
        upper = k / np.tanh(k * tau) if k > 0 else 1.0 / tau
    return lower, upper


def check_a_priori_bounds(sol: RiccatiSolution, tol: float = 1e-8) -> ValidationReport:
    m = sol.model
    live = sol.tau > 0
    tau, t = sol.tau[live], sol.t[live]
    A, B, C, D, E = (v[live] for v in (sol.A, sol.B, sol.C, sol.D, sol.E))
    lower, upper = d_bounds(m, tau)
    k = kappa(m)
    checks = [
        _margin_check("D_lower", t, D, lower, tol, upper=False),
        _margin_check("D_upper", t, D, upper, tol, upper=True),
        _margin_check("B_lower", t, B, np.exp(-m.rho.sup * tau), tol, upper=False),
        _margin_check("B_upper", t, B, np.ones_like(B), tol, upper=True),
        _margin_check("E_lower", t, E, np.zeros_like(E), tol, upper=False),
    ]
    if m.gamma > 0:
        checks.append(_margin_check("E_upper", t, E, k * np.tanh(k * tau) / m.gamma, tol, upper=True))
    zero = np.zeros_like(A)
    checks += [
        _margin_check("A_nonneg", t, A, zero, tol, upper=False),
        _margin_check("D_nonneg", t, D, zero, tol, upper=False),
        _margin_check("C_nonpos", t, C, zero, tol, upper=True),
        _margin_check("gammaC_range", t, -m.gamma * C, np.ones_like(C), tol, upper=True),
        _margin_check("etaE_range", t, m.eta * E, np.ones_like(E), tol, upper=True),
    ]
    return ValidationReport(checks, tol)


def asymptotic_ratios(sol: RiccatiSolution, n_nodes: int = 20):
    """(tau, |tau A - eta|/tau, |B - 1|/tau, |C|/tau^3) on the terminal tail.

    Uses the normalised unknowns where the solver kept them (the direct
    formulas cancel catastrophically once tau drops below ~1e-8).
    """
    m = sol.model
    if sol.yhat is not None and sol.geometric is not None and sol.geometric.size:
        idx = sol.geometric[sol.tau[sol.geometric] > 0][-n_nodes:]
        tau = sol.tau[idx]
        h, g, p = sol.yhat[idx].T
        return tau, np.abs(h), np.abs(g), np.abs(p) / tau
    ok = np.flatnonzero(sol.tau >= 1e-6 * m.T)[-n_nodes:]
    tau = sol.tau[ok]
    return (
        tau,
        np.abs(tau * sol.A[ok] - m.eta) / tau,
        np.abs(sol.B[ok] - 1.0) / tau,
        np.abs(sol.C[ok]) / tau**3,
    )


def _dyadic_check(name: str, T: float, tau: np.ndarray, q: np.ndarray, growth: float = 1.5) -> CheckResult:
    if tau.size == 0:
        return CheckResult(name, -np.inf, T, False)
    if not np.all(np.isfinite(q)):
        i = int(np.flatnonzero(~np.isfinite(q))[0])
        return CheckResult(name, -np.inf, T - tau[i], False)
    scale = np.floor(np.log2(tau[0] / tau) + 1e-9).astype(int)
    levels = np.unique(scale)
    sups = np.array([q[scale == s].max() for s in levels])
    where = np.array([tau[scale == s].min() for s in levels])
    floor = 1e-9 * max(1.0, float(sups.max()))
    worst, loc = np.inf, T - tau[0]
    for j in range(1, sups.size):
        mj = (growth * sups[j - 1] + floor - sups[j]) / max(sups[j - 1], floor)
        if mj < worst:
            worst, loc = mj, T - where[j]
    if sups.size == 1:
        worst = 0.0
    return CheckResult(name, float(worst), float(loc), bool(worst >= 0))


def check_asymptotics(sol: RiccatiSolution, n_nodes: int = 20) -> ValidationReport:
    tau, q1, q2, q3 = asymptotic_ratios(sol, n_nodes)
    T = sol.model.T
    checks = [
        _dyadic_check("A_asymptotic", T, tau, q1),
        _dyadic_check("B_asymptotic", T, tau, q2),
        _dyadic_check("C_asymptotic", T, tau, q3),
    ]
    return ValidationReport(checks, 0.0)


def check_algebraic_closure(sol: RiccatiSolution, tol: float = 1e-12) -> ValidationReport:
    """eta D + gamma B - A = 0 and eta E - gamma C + B - 1 = 0 nodewise (relative)."""
    m = sol.model
    live = sol.tau > 0
    t = sol.t[live]
    A, B, C, D, E = (v[live] for v in (sol.A, sol.B, sol.C, sol.D, sol.E))
    r1 = np.abs(m.eta * D + m.gamma * B - A) / np.maximum(1.0, np.abs(A))
    r2 = np.abs(m.eta * E - m.gamma * C + B - 1.0) / np.maximum(1.0, np.abs(B))
    out = []
    for name, r in (("closure_D", r1), ("closure_E", r2)):
        r = np.where(np.isnan(r), np.inf, r)
        i = int(np.argmax(r))
        out.append(CheckResult(name, float(-r[i]), float(t[i]), bool(r[i] <= tol)))
    return ValidationReport(out, tol)


def check_contraction(sol: RiccatiSolution, limit: float = 0.55) -> CheckResult:
    worst = max(sol.contraction_ratios, default=0.0)
    return CheckResult("picard_contraction", limit - worst, sol.model.T - sol.delta, worst <= limit)
