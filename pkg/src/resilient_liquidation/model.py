"""Model parameters, coefficient functions and derived constants.

The control problem is

    minimise  int_t^T  1/2 eta xi^2 + xi Y + 1/2 lambda X^2  ds
    s.t.      dX = -xi ds,  dY = (-rho Y + gamma xi) ds,  X_T = 0,

with eta > 0, gamma >= 0 and nonnegative bounded resilience rho(.) and
risk weight lambda(.).  Coefficients are restricted to constant,
piecewise-constant and piecewise-linear shapes so that their sup-norms
and integrals are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

CONSTANT = "constant"
PIECEWISE_CONSTANT = "piecewise_constant"
PIECEWISE_LINEAR = "piecewise_linear"
KINDS = (CONSTANT, PIECEWISE_CONSTANT, PIECEWISE_LINEAR)

R_MIN = 1.0


class ModelError(ValueError):
    """Base class for violated model assumptions."""


class NonpositiveEta(ModelError):
    pass


class NegativeGamma(ModelError):
    pass


class NonpositiveHorizon(ModelError):
    pass


class NegativeCoefficient(ModelError):
    pass


class BadBreakpoints(ModelError):
    pass


class OutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class CoefficientFn:
    """A nonnegative coefficient on [0, T].

    ``piecewise_constant``: ``values[i]`` holds on ``[b[i], b[i+1])``, the
    last piece is closed at T (right-continuous convention).
    ``piecewise_linear``: ``values[i]`` is the value at ``b[i]``, linear in
    between.  ``constant``: a single value, no breakpoints.
    """

    kind: str
    values: tuple[float, ...]
    breakpoints: tuple[float, ...] = ()

    @classmethod
    def constant(cls, value: float) -> "CoefficientFn":
        return cls(CONSTANT, (float(value),))

    @classmethod
    def piecewise_constant(cls, breakpoints: Sequence[float], values: Sequence[float]) -> "CoefficientFn":
        return cls(PIECEWISE_CONSTANT, tuple(map(float, values)), tuple(map(float, breakpoints)))

    @classmethod
    def piecewise_linear(cls, breakpoints: Sequence[float], values: Sequence[float]) -> "CoefficientFn":
        return cls(PIECEWISE_LINEAR, tuple(map(float, values)), tuple(map(float, breakpoints)))

    @property
    def sup(self) -> float:
        return max(self.values)

    @property
    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.values)

    def interior_breakpoints(self) -> tuple[float, ...]:
        return self.breakpoints[1:-1]

    def __call__(self, t: float) -> float:
        if self.kind == CONSTANT:
            return self.values[0]
        b = self.breakpoints
        if self.kind == PIECEWISE_LINEAR:
            return float(np.interp(t, b, self.values))
        i = int(np.searchsorted(b, t, side="right")) - 1
        return self.values[min(max(i, 0), len(self.values) - 1)]

    def on_piece(self, t: float, lo: float, hi: float) -> float:
        """Value at ``t`` using the piece that covers the open interval (lo, hi).

        Integrators evaluate at segment endpoints; for piecewise-constant
        data this picks the one-sided value belonging to the segment.
        """
        if self.kind == PIECEWISE_CONSTANT:
            return self(0.5 * (lo + hi))
        return self(t)

    def integral(self, a: float, b: float) -> float:
        """Exact integral over [a, b] (a <= b)."""
        if b <= a:
            return 0.0
        if self.kind == CONSTANT:
            return self.values[0] * (b - a)
        bp = np.asarray(self.breakpoints)
        inner = bp[(bp > a) & (bp < b)]
        knots = np.concatenate(([a], inner, [b]))
        lo, hi = knots[:-1], knots[1:]
        if self.kind == PIECEWISE_CONSTANT:
            vals = np.array([self(0.5 * (x + y)) for x, y in zip(lo, hi)])
            return float(np.sum(vals * (hi - lo)))
        v = np.interp(knots, bp, self.values)
        return float(np.sum(0.5 * (v[:-1] + v[1:]) * (hi - lo)))

    def integrals(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Vectorised ``integral(a[i], b[i])`` computed from the step widths."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        w = b - a
        if self.kind == CONSTANT:
            return self.values[0] * w
        if self.kind == PIECEWISE_CONSTANT:
            out = self.sample(0.5 * (a + b)) * w
        else:
            out = 0.5 * (self.sample(a) + self.sample(b)) * w
        bp = np.asarray(self.breakpoints)
        lo = np.searchsorted(bp, a, side="right")
        hi = np.searchsorted(bp, b, side="left")
        for i in np.flatnonzero(hi > lo):
            out[i] = self.integral(a[i], b[i])
        return out

    def endpoint_values(self, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values at both ends of each step [a, b] taken from the step's own piece."""
        if self.kind == PIECEWISE_CONSTANT:
            v = self.sample(0.5 * (np.asarray(a) + np.asarray(b)))
            return v, v
        return self.sample(a), self.sample(b)

    def sample(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == CONSTANT:
            return np.full_like(t, self.values[0])
        if self.kind == PIECEWISE_LINEAR:
            return np.interp(t, self.breakpoints, self.values)
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        idx = np.clip(idx, 0, len(self.values) - 1)
        return np.asarray(self.values)[idx]

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "values": list(self.values)}
        if self.breakpoints:
            out["breakpoints"] = list(self.breakpoints)
        return out

    @classmethod
    def from_spec(cls, spec) -> "CoefficientFn":
        if isinstance(spec, (int, float)):
            return cls.constant(spec)
        kind = spec.get("kind", CONSTANT)
        if kind == CONSTANT:
            v = spec.get("value", spec.get("values"))
            if isinstance(v, (list, tuple)):
                v = v[0]
            return cls.constant(v)
        return cls(kind, tuple(map(float, spec["values"])), tuple(map(float, spec["breakpoints"])))


@dataclass(frozen=True)
class ModelParams:
    eta: float
    gamma: float
    T: float
    rho: CoefficientFn = field(default_factory=lambda: CoefficientFn.constant(0.0))
    lam: CoefficientFn = field(default_factory=lambda: CoefficientFn.constant(0.0))

    def breakpoints(self) -> tuple[float, ...]:
        """Sorted interior breakpoints of both coefficients."""
        pts = set(self.rho.interior_breakpoints()) | set(self.lam.interior_breakpoints())
        return tuple(sorted(pts))


@dataclass(frozen=True)
class ProblemInstance:
    model: ModelParams
    t0: float = 0.0
    x0: float = 1.0
    y0: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.t0 < self.model.T:
            raise OutOfRange(f"t0={self.t0} must lie in [0, T={self.model.T})")


@dataclass(frozen=True)
class ContractionConstants:
    R: float
    L: float
    delta: float


def _check_coefficient(name: str, fn: CoefficientFn, T: float) -> None:
    if fn.kind not in KINDS:
        raise BadBreakpoints(f"{name}: unknown coefficient kind {fn.kind!r}")
    vals = np.asarray(fn.values, dtype=float)
    if vals.size == 0 or not np.all(np.isfinite(vals)):
        raise NegativeCoefficient(f"{name}: values must be finite (rho, lambda bounded)")
    if np.any(vals < 0):
        raise NegativeCoefficient(f"{name}: values must be nonnegative, got min {vals.min()}")
    if fn.kind == CONSTANT:
        if vals.size != 1:
            raise BadBreakpoints(f"{name}: constant coefficient takes exactly one value")
        return
    b = np.asarray(fn.breakpoints, dtype=float)
    if b.size < 2 or np.any(np.diff(b) <= 0):
        raise BadBreakpoints(f"{name}: breakpoints must be strictly increasing")
    if abs(b[0]) > 1e-12 or abs(b[-1] - T) > 1e-12 * max(1.0, T):
        raise BadBreakpoints(f"{name}: breakpoints must cover [0, T={T}], got [{b[0]}, {b[-1]}]")
    expected = b.size - 1 if fn.kind == PIECEWISE_CONSTANT else b.size
    if vals.size != expected:
        raise BadBreakpoints(f"{name}: {fn.kind} with {b.size} breakpoints needs {expected} values")


def validate_params(raw: ModelParams) -> ModelParams:
    if not (raw.eta > 0 and math.isfinite(raw.eta)):
        raise NonpositiveEta(f"eta must be > 0, got {raw.eta}")
    if not (raw.gamma >= 0 and math.isfinite(raw.gamma)):
        raise NegativeGamma(f"gamma must be >= 0, got {raw.gamma}")
    if not (raw.T > 0 and math.isfinite(raw.T)):
        raise NonpositiveHorizon(f"T must be > 0, got {raw.T}")
    _check_coefficient("rho", raw.rho, raw.T)
    _check_coefficient("lambda", raw.lam, raw.T)
    return raw


def kappa(model: ModelParams) -> float:
    return math.sqrt(2.0 / model.eta * max(model.lam.sup, model.gamma * model.rho.sup))


def eval_coefficients(model: ModelParams, t: float) -> tuple[float, float]:
    if not 0.0 <= t <= model.T:
        raise OutOfRange(f"t={t} outside [0, {model.T}]")
    return model.rho(t), model.lam(t)


def radius(model: ModelParams) -> float:
    eta, g, T = model.eta, model.gamma, model.T
    return 4.0 * max(T * model.lam.sup + g * g * T / eta + 2.0 * g, model.rho.sup)


def jacobian_bound(model: ModelParams, R: float, tau_max: float) -> np.ndarray:
    """Entrywise bound of |d f / d y| over |y_i| <= tau^2 R, tau <= tau_max.

    ``f`` is the driver of the transformed (H, G, P) system; with
    y = tau^2 * yhat every 1/tau factor cancels, which is what keeps these
    bounds finite at the terminal time.
    """
    eta, g, rho = model.eta, model.gamma, model.rho.sup
    s = tau_max
    return np.array(
        [
            [
                2 * R / eta + 2 * g * s * R / eta + 2 * g / eta,
                2 * g * s * R / eta + 2 * g * g * (s * s * R + s) / eta + 2 * g,
                0.0,
            ],
            [
                R / eta + g * s * R / eta,
                R / eta + 2 * g * s * R / eta + g * (g * s * s * R + 1) / eta + rho,
                g * s * R / eta + g * g * (s * s * R + s) / eta + g,
            ],
            [
                0.0,
                2 * R / eta + 2 * g * s * R / eta,
                2 * g * s * R / eta + 2 * g * g * s * s * R / eta + 2 * rho,
            ],
        ]
    )


def lipschitz_bound(model: ModelParams, R: float, tau_max: float) -> float:
    J = jacobian_bound(model, R, tau_max)
    # Frobenius dominates the Euclidean operator norm, row sums the max-norm one.
    return float(max(np.sqrt(np.sum(J * J)), np.max(np.sum(J, axis=1))))


def contraction_constants(model: ModelParams) -> ContractionConstants:
    T = model.T
    R = radius(model)
    if R == 0.0:
        # f(., 0) = 0 and 0 is the fixed point on any window.
        return ContractionConstants(R=R_MIN, L=1.0 / T, delta=0.5 * T)

    def excess(d: float) -> float:
        return 2.0 * d * lipschitz_bound(model, R, d) - 1.0

    hi = 0.5 * T
    if excess(hi) <= 0:
        return ContractionConstants(R=R, L=lipschitz_bound(model, R, hi), delta=hi)
    lo = hi
    while excess(lo) > 0:
        lo *= 0.5
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if excess(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi / lo - 1.0 < 1e-12:
            break
    L = lipschitz_bound(model, R, lo)
    delta = min(lo, 0.5 / L)
    return ContractionConstants(R=R, L=L, delta=delta)
