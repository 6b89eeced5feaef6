"""Optimal schedules at gamma = 100, T = 1, rho = 1, lambda = 0 for several eta.

Writes one trajectory CSV per eta plus a combined CSV on a uniform grid with
the block-trade (Obizhaeva-Wang) and no-resilience (Almgren-Chriss)
references, and prints the sup distances.
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from resilient_liquidation import CoefficientFn, ModelParams, ProblemInstance, simulate_optimal, solve_riccati
from resilient_liquidation.benchmarks import ac_inventory, obizhaeva_wang_schedule, sup_gap


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eta", type=float, nargs="+", default=[1.0, 0.1, 0.01])
    ap.add_argument("--gamma", type=float, default=100.0)
    ap.add_argument("--nodes", type=int, default=201)
    ap.add_argument("--out", type=Path, default=Path("runs/figure1_family"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    t = np.linspace(0.0, 1.0, args.nodes)
    columns = {"t": t, "X_OW": obizhaeva_wang_schedule(1.0, 1.0, 1.0).inventory(t)}
    for eta in args.eta:
        m = ModelParams(eta, args.gamma, 1.0, rho=CoefficientFn.constant(1.0))
        tr = simulate_optimal(solve_riccati(m), ProblemInstance(m))
        tr.to_csv(args.out / f"trajectory_eta{eta:g}.csv")
        X = np.interp(t, tr.t, tr.X)
        columns[f"X_eta{eta:g}"] = X
        columns[f"X_AC_eta{eta:g}"] = ac_inventory(eta, 0.0, 1.0, 0.0, 1.0, t)
        print(
            f"eta={eta:<6g} cost={tr.realized_cost:.6f} X(0.5)={X[args.nodes // 2]:.4f} "
            f"OW gap={sup_gap(X, columns['X_OW']):.4f} min rate={tr.xi.min():.4f}"
        )

    with open(args.out / "family.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(list(columns))
        for row in zip(*columns.values()):
            wr.writerow([repr(float(v)) for v in row])
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
