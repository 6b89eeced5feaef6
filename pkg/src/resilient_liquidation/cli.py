"""Command-line front end.

    resliq solve    --config run.yaml [--out DIR]
    resliq simulate --config run.yaml
    resliq compare  --config run.yaml
    resliq validate --config run.yaml [--seed N] [--oracle-n N] [--solution riccati.csv]
    resliq sweep    --config run.yaml

Exit codes: 0 success (validate: every check passed), 1 usage or config
error, 2 numerical failure (validate: some check failed).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import itertools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .battery import battery
from .benchmarks import ac_inventory, obizhaeva_wang_schedule, sup_gap
from .config import ConfigError, RunConfig, load_config
from .model import CoefficientFn, ModelError, ModelParams, ProblemInstance, validate_params
from .numerics import NonFiniteField, SingularMatrix
from .oracle import NonConvex, SingularKKT, oracle_strategy
from .riccati import (
    CheckResult,
    RiccatiSolution,
    SolverError,
    check_a_priori_bounds,
    check_algebraic_closure,
    check_asymptotics,
    check_contraction,
    solve_riccati,
)
from .strategy import SineBump, TerminalMiss, cost_of_trajectory, perturbed, simulate_optimal, value_function

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
NUMERIC_ERRORS = (ModelError, SolverError, TerminalMiss, NonFiniteField, SingularMatrix, SingularKKT, NonConvex)
COMPARE_NODES = 201


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _num(v: float):
    """JSON-safe float (inf and nan as strings)."""
    v = float(v)
    if math.isfinite(v):
        return v
    return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow([v if isinstance(v, (str, int)) else repr(float(v)) for v in row])


def _error_report(exc: Exception) -> dict:
    return {"status": "error", "error": type(exc).__name__, "message": str(exc)}


# --------------------------------------------------------------------------
# commands


def cmd_solve(cfg: RunConfig, out: Path, **_) -> int:
    try:
        validate_params(cfg.model)
        sol = solve_riccati(cfg.model, cfg.solver_config())
    except NUMERIC_ERRORS as exc:
        _write_json(out / "solve_report.json", _error_report(exc))
        return EXIT_NUMERIC
    sol.to_csv(out / "riccati.csv")
    closure = check_algebraic_closure(sol)
    report = {
        "status": "ok",
        "delta": sol.delta,
        "delta_halvings": sol.halvings,
        "picard_iterations": sol.picard_iterations,
        "contraction_ratios": [_num(r) for r in sol.contraction_ratios],
        "residuals": {c.name: _num(-c.worst_margin) for c in closure.checks},
        "nodes": int(sol.tau.size),
        "A0": _num(sol.A[0]),
        "B0": _num(sol.B[0]),
        "C0": _num(sol.C[0]),
    }
    _write_json(out / "solve_report.json", report)
    return EXIT_OK


def _solve_and_simulate(cfg: RunConfig):
    validate_params(cfg.model)
    sol = solve_riccati(cfg.model, cfg.solver_config())
    traj = simulate_optimal(sol, cfg.instance())
    return sol, traj


def cmd_simulate(cfg: RunConfig, out: Path, **_) -> int:
    try:
        sol, traj = _solve_and_simulate(cfg)
    except NUMERIC_ERRORS as exc:
        _write_json(out / "cost.json", _error_report(exc))
        return EXIT_NUMERIC
    traj.to_csv(out / "trajectory.csv")
    parts = cost_of_trajectory(cfg.model, traj)
    V = value_function(sol, cfg.t0, cfg.x0, cfg.y0)
    report = {
        "status": "ok",
        **{k: _num(v) for k, v in parts.to_dict().items()},
        "value_function": _num(V),
        "relative_error": _num((parts.total - V) / abs(V)) if V != 0 else _num(parts.total),
        "min_rate": _num(np.min(traj.xi)),
        "terminal_inventory": _num(traj.X[-2]),
    }
    _write_json(out / "cost.json", report)
    return EXIT_OK


def _compare_curves(cfg: RunConfig, traj):
    m = cfg.model
    t = np.linspace(cfg.t0, m.T, COMPARE_NODES)
    tau = m.T - t
    X_model = np.interp(tau, traj.tau[::-1], traj.X[::-1])
    X_ac = ac_inventory(m.eta, m.lam, m.T, cfg.t0, cfg.x0, t)
    if m.rho.kind == "constant":
        ow = obizhaeva_wang_schedule(m.rho.values[0], m.T - cfg.t0, cfg.x0)
        X_ow = ow.inventory(t - cfg.t0)
    else:
        X_ow = np.full_like(t, np.nan)
    return t, X_model, X_ac, X_ow


def _gaps(t, X_model, X_ac, X_ow, t0, T) -> dict:
    band = (t >= t0 + 0.1 * (T - t0)) & (t <= T - 0.1 * (T - t0))
    has_ow = not np.any(np.isnan(X_ow))
    return {
        "ow_gap": _num(sup_gap(X_model, X_ow)) if has_ow else None,
        "ow_gap_band": _num(np.max(np.abs(X_model - X_ow)[band])) if has_ow else None,
        "ac_gap": _num(sup_gap(X_model, X_ac, interior=False)),
    }


def cmd_compare(cfg: RunConfig, out: Path, **_) -> int:
    try:
        _, traj = _solve_and_simulate(cfg)
    except NUMERIC_ERRORS as exc:
        _write_json(out / "distances.json", _error_report(exc))
        return EXIT_NUMERIC
    t, X_model, X_ac, X_ow = _compare_curves(cfg, traj)
    _write_csv(out / "compare.csv", ["t", "X_model", "X_AC", "X_OW"], zip(t, X_model, X_ac, X_ow))
    _write_json(out / "distances.json", {"status": "ok", "nodes": COMPARE_NODES,
                                          **_gaps(t, X_model, X_ac, X_ow, cfg.t0, cfg.model.T)})
    return EXIT_OK


def _check(name, margin, passed, **extra) -> dict:
    return {"name": name, "worst_margin": _num(margin), "pass": bool(passed), **extra}


def validate_model(model: ModelParams, cfg: RunConfig, oracle_n: int | None) -> list[dict]:
    """Every solver, strategy and (optionally) oracle check for one model."""
    sol = solve_riccati(model, dataclasses.replace(cfg.solver_config(), t0=0.0))
    checks = [c.to_dict() for c in check_a_priori_bounds(sol).checks]
    checks += [c.to_dict() for c in check_asymptotics(sol).checks]
    checks += [c.to_dict() for c in check_algebraic_closure(sol).checks]
    checks.append(check_contraction(sol).to_dict())

    inst = ProblemInstance(model, cfg.t0, cfg.x0, cfg.y0)
    try:
        traj = simulate_optimal(sol, inst)
    except TerminalMiss as exc:
        checks.append(_check("terminal_inventory", -np.inf, False, message=str(exc)))
        return checks
    tol_x = 1e-6 * max(1.0, abs(cfg.x0))
    checks.append(_check("terminal_inventory", tol_x - abs(traj.X[-2]), abs(traj.X[-2]) <= tol_x))
    live = traj.tau > 0
    decay = float(np.max(np.abs(traj.X[live]) / traj.tau[live]))
    checks.append(_check("linear_decay", -decay, math.isfinite(decay)))
    V = value_function(sol, cfg.t0, cfg.x0, cfg.y0)
    rel = abs(traj.realized_cost - V) / max(abs(V), 1e-300)
    checks.append(_check("self_consistency", 1e-3 - rel, rel <= 1e-3))
    span = model.T - cfg.t0
    bump = SineBump.interior(cfg.t0, model.T, amp=max(1.0, abs(cfg.x0)) / span)
    excess = min(perturbed(model, traj, eps, bump).realized_cost - V for eps in (0.1, -0.1, 0.01, -0.01))
    checks.append(_check("perturbation", excess + 1e-9, excess >= -1e-9))
    if oracle_n:
        ds = oracle_strategy(inst, oracle_n)
        gap = abs(V - ds.cost) / abs(ds.cost) if ds.cost != 0 else abs(V)
        checks.append(_check("oracle_value", 1e-2 - gap, gap <= 1e-2, oracle=_num(ds.cost), value=_num(V)))
        cont = ds.step_average_from(traj.t, traj.X)
        horizon = model.T - 0.05 * span
        sel = ds.t[1:] <= horizon + 1e-12
        scale = np.max(np.abs(cont[sel]))
        dist = np.max(np.abs(cont[sel] - ds.xi[sel])) / scale if scale > 0 else 0.0
        checks.append(_check("oracle_schedule", 2e-2 - dist, dist <= 2e-2))
    return checks


def _validate_solution_file(path: Path, model: ModelParams) -> list[dict]:
    sol = RiccatiSolution.from_csv(path, model)
    checks = [c.to_dict() for c in check_a_priori_bounds(sol).checks]
    checks += [c.to_dict() for c in check_asymptotics(sol).checks]
    checks += [c.to_dict() for c in check_algebraic_closure(sol).checks]
    return checks


def cmd_validate(cfg: RunConfig, out: Path, seed=None, oracle_n=None, solution=None, **_) -> int:
    report: dict = {}
    try:
        validate_params(cfg.model)
        if solution is not None:
            checks = _validate_solution_file(Path(solution), cfg.model)
            report["source"] = "file"
        else:
            checks = validate_model(cfg.model, cfg, oracle_n if oracle_n is not None else cfg.oracle_n)
            report["source"] = "solver"
    except NUMERIC_ERRORS as exc:
        _write_json(out / "validation.json", {"pass": False, **_error_report(exc)})
        return EXIT_NUMERIC
    report["checks"] = checks
    ok = all(c["pass"] for c in checks)
    if seed is not None:
        rows = []
        for i, m in enumerate(battery(cfg.battery_n, seed)):
            try:
                mc = validate_model(m, RunConfig(model=m, solver=cfg.solver), None)
                rows.append({"model": i, "pass": all(c["pass"] for c in mc),
                             "failures": [c["name"] for c in mc if not c["pass"]]})
            except NUMERIC_ERRORS as exc:
                rows.append({"model": i, "pass": False, "failures": [type(exc).__name__]})
        report["battery"] = {"seed": seed, "models": rows}
        ok = ok and all(r["pass"] for r in rows)
    report["pass"] = ok
    report["failures"] = [c["name"] for c in checks if not c["pass"]]
    _write_json(out / "validation.json", report)
    return EXIT_OK if ok else EXIT_NUMERIC


def _coef_label(fn: CoefficientFn):
    return fn.values[0] if fn.kind == "constant" else json.dumps(fn.to_dict(), sort_keys=True)


def _sweep_cell(args):
    cfg, overrides = args
    m = cfg.model
    fields = {"eta": m.eta, "gamma": m.gamma, "T": m.T, "rho": m.rho, "lam": m.lam}
    inst = {"x0": cfg.x0, "y0": cfg.y0}
    for k, v in overrides.items():
        if k in ("rho", "lambda"):
            fields["rho" if k == "rho" else "lam"] = CoefficientFn.from_spec(v)
        elif k in inst:
            inst[k] = float(v)
        else:
            fields[k] = float(v)
    model = ModelParams(**fields)
    cell = dataclasses.replace(cfg, model=model, **inst)
    row = {"eta": model.eta, "gamma": model.gamma, "T": model.T,
           "rho": _coef_label(model.rho), "lambda": _coef_label(model.lam), "x0": cell.x0, "y0": cell.y0}
    try:
        sol, traj = _solve_and_simulate(cell)
    except NUMERIC_ERRORS as exc:
        return {**row, "status": type(exc).__name__}
    t, X_model, X_ac, X_ow = _compare_curves(cell, traj)
    gaps = _gaps(t, X_model, X_ac, X_ow, cell.t0, model.T)
    return {
        **row,
        "status": "ok",
        "value": value_function(sol, cell.t0, cell.x0, cell.y0),
        "realized_cost": traj.realized_cost,
        "min_rate": float(np.min(traj.xi)),
        "ow_gap": gaps["ow_gap"] if gaps["ow_gap"] is not None else "nan",
        "ac_gap": gaps["ac_gap"],
    }


SWEEP_COLUMNS = ["eta", "gamma", "T", "rho", "lambda", "x0", "y0", "status",
                 "value", "realized_cost", "min_rate", "ow_gap", "ac_gap"]


def cmd_sweep(cfg: RunConfig, out: Path, **_) -> int:
    if not cfg.sweep:
        raise UsageError("config has no 'sweep' section")
    empty = [k for k, v in cfg.sweep.items() if len(v) == 0]
    if empty:
        raise UsageError(f"empty sweep range for {empty}")
    keys = list(cfg.sweep)
    cells = [dict(zip(keys, combo)) for combo in itertools.product(*(cfg.sweep[k] for k in keys))]
    with ProcessPoolExecutor() as pool:
        rows = list(pool.map(_sweep_cell, [(cfg, c) for c in cells]))
    _write_csv(out / "summary.csv", SWEEP_COLUMNS,
               ([r.get(c, "") for c in SWEEP_COLUMNS] for r in rows))
    return EXIT_OK if all(r["status"] == "ok" for r in rows) else EXIT_NUMERIC


COMMANDS = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "validate": cmd_validate,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="resliq", description="Optimal liquidation with transient impact and resilience.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="YAML or JSON run configuration")
        s.add_argument("--out", help="output directory (default: the config's 'output')")
        s.add_argument("--seed", type=int, help="validate: also run the seeded random battery")
        s.add_argument("--oracle-n", type=int, help="override the oracle step count (0 disables)")
        if name == "validate":
            s.add_argument("--solution", help="check a riccati.csv file instead of solving")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = Path(args.out) if args.out else cfg.output
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](
            cfg, out, seed=args.seed, oracle_n=args.oracle_n, solution=getattr(args, "solution", None)
        )
    except (ConfigError, UsageError, OSError) as exc:
        print(f"resliq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
