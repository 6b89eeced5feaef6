"""Run configuration read from a YAML (or JSON) file.

Example::

    model:
      eta: 0.05
      gamma: 100
      T: 1
      rho: {kind: constant, value: 1}
      lambda: {kind: piecewise_constant, breakpoints: [0, 0.5, 1], values: [0, 2]}
    instance: {t0: 0, x0: 1, y0: 0}
    solver: {n_regular: 200, n_singular: 60, ratio: 0.5}
    oracle: {N: 2000}
    sweep: {eta: [1, 0.1, 0.01]}
    output: runs/figure1
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .model import CoefficientFn, ModelParams, ProblemInstance
from .riccati import SolverConfig

SWEEP_KEYS = ("eta", "gamma", "T", "rho", "lambda", "x0", "y0")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    model: ModelParams
    t0: float = 0.0
    x0: float = 1.0
    y0: float = 0.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    oracle_n: int = 2000
    battery_n: int = 20
    sweep: dict = field(default_factory=dict)
    output: Path = Path("out")

    def instance(self) -> ProblemInstance:
        return ProblemInstance(self.model, self.t0, self.x0, self.y0)

    def solver_config(self) -> SolverConfig:
        return dataclasses.replace(self.solver, t0=min(self.solver.t0, self.t0))


def _coef(spec, name):
    if spec is None:
        return CoefficientFn.constant(0.0)
    try:
        return CoefficientFn.from_spec(spec)
    except (KeyError, TypeError, AttributeError) as exc:
        raise ConfigError(f"bad coefficient spec for {name}: {spec!r}") from exc


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict) or "model" not in raw:
        raise ConfigError("config needs a 'model' section")
    m = raw["model"]
    try:
        model = ModelParams(
            eta=float(m["eta"]),
            gamma=float(m.get("gamma", 0.0)),
            T=float(m["T"]),
            rho=_coef(m.get("rho"), "rho"),
            lam=_coef(m.get("lambda", m.get("lam")), "lambda"),
        )
    except KeyError as exc:
        raise ConfigError(f"model section is missing {exc}") from exc
    inst = raw.get("instance") or {}
    known = {f.name for f in dataclasses.fields(SolverConfig)}
    solver_raw = raw.get("solver") or {}
    unknown = set(solver_raw) - known
    if unknown:
        raise ConfigError(f"unknown solver settings: {sorted(unknown)}")
    sweep = raw.get("sweep") or {}
    bad = set(sweep) - set(SWEEP_KEYS)
    if bad:
        raise ConfigError(f"cannot sweep over {sorted(bad)}; allowed: {SWEEP_KEYS}")
    return RunConfig(
        model=model,
        t0=float(inst.get("t0", 0.0)),
        x0=float(inst.get("x0", 1.0)),
        y0=float(inst.get("y0", 0.0)),
        solver=SolverConfig(**solver_raw),
        oracle_n=int((raw.get("oracle") or {}).get("N", 2000)),
        battery_n=int((raw.get("battery") or {}).get("n", 20)),
        sweep={k: list(v) for k, v in sweep.items()},
        output=Path(raw.get("output", "out")),
    )


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return parse_config(raw)
