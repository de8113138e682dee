"""Run one or more builtin benchmark suites and write CSV/JSON reports plus an aggregate table."""

import argparse
import time
from dataclasses import replace

from ewround.bench import builtin_suite, run_suite


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("suites", nargs="+", help="builtin suite names, e.g. clique cover match match34 toy")
    ap.add_argument("--out", default="results")
    ap.add_argument("--count", type=int, default=None, help="override the instance count")
    args = ap.parse_args()
    for name in args.suites:
        spec = builtin_suite(name)
        if args.count is not None:
            spec = replace(spec, count=args.count)
        t0 = time.time()
        report = run_suite(spec)
        csv_path, _ = report.write(args.out)
        print(f"== {name}: {spec.count} instances in {time.time() - t0:.1f}s -> {csv_path}")
        for a in report.aggregates():
            print("  " + "  ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in a.items()))


if __name__ == "__main__":
    main()
