"""Run every solver and strategy check on a seeded battery of random models."""

import argparse
import time

from resilient_liquidation.battery import DEFAULT_SEED, battery
from resilient_liquidation.cli import validate_model
from resilient_liquidation.config import RunConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=DEFAULT_SEED)
    ap.add_argument("-n", type=int, default=20)
    ap.add_argument("--oracle-n", type=int, default=0, help="also compare with the discrete oracle (tolerances assume N = 2000)")
    args = ap.parse_args()

    failed = 0
    for i, m in enumerate(battery(args.n, args.seed)):
        t = time.perf_counter()
        checks = validate_model(m, RunConfig(model=m), args.oracle_n)
        bad = [c["name"] for c in checks if not c["pass"]]
        failed += bool(bad)
        print(
            f"{i:3d} eta={m.eta:8.4f} gamma={m.gamma:7.2f} T={m.T:5.3f} "
            f"{'ok' if not bad else 'FAIL ' + ','.join(bad):<20s} {time.perf_counter() - t:5.2f} s"
        )
    print(f"{args.n - failed}/{args.n} models passed (seed {args.seed})")
    raise SystemExit(1 if failed else 0)


if __name__ == "__main__":
    main()
