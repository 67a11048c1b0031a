"""Run every bundled scenario and write one CSV/text table per scenario.

    python3 scripts/run_benchmarks.py --out results --replications 200 --jobs 1
"""

import argparse
from pathlib import Path

from nonprob.simulation import bundled_scenarios, load_scenario, run_benchmark


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="results")
    p.add_argument("--replications", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--scenario", action="append", help="restrict to these scenarios (repeatable)")
    args = p.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.scenario or bundled_scenarios():
        table = run_benchmark([load_scenario(name)], R=args.replications, seed=args.seed, n_jobs=args.jobs)
        (out / f"{name}.csv").write_text(table.to_csv(), encoding="utf-8")
        (out / f"{name}.txt").write_text(table.to_text(), encoding="utf-8")
        print(table.to_text())


if __name__ == "__main__":
    main()
