"""Seeded random models for property checks and the CLI battery."""

from __future__ import annotations

import numpy as np

from .model import CoefficientFn, ModelParams, validate_params

DEFAULT_SEED = 20240531


def _random_piecewise(rng: np.random.Generator, T: float, vmax: float) -> CoefficientFn:
    pieces = int(rng.integers(1, 5))
    inner = np.sort(rng.uniform(0.1 * T, 0.9 * T, pieces - 1))
    bps = np.concatenate(([0.0], inner, [T]))
    vals = rng.uniform(0.0, vmax, pieces)
    return CoefficientFn.piecewise_constant(bps, vals)


def random_model(rng: np.random.Generator) -> ModelParams:
    """eta log-uniform on [0.01, 10], gamma uniform on [0, 100], T in [0.5, 2]."""
    eta = float(10 ** rng.uniform(-2, 1))
    gamma = float(rng.uniform(0, 100))
    T = float(rng.uniform(0.5, 2.0))
    rho = _random_piecewise(rng, T, 10.0)
    lam = _random_piecewise(rng, T, 10.0)
    return validate_params(ModelParams(eta=eta, gamma=gamma, T=T, rho=rho, lam=lam))


def battery(n: int = 20, seed: int = DEFAULT_SEED) -> list[ModelParams]:
    rng = np.random.default_rng(seed)
    return [random_model(rng) for _ in range(n)]
