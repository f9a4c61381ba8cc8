#!/usr/bin/env python3
"""Iteration counts to reach each residual threshold, M1 vs M2, on the synthetic set.

Usage: python3 scripts/run_benchmark.py [--size 128] [--csv out.csv]
"""
import argparse
import logging
import time

from pdflow.metrics import DEFAULT_THRESHOLDS, bench_convergence, bench_problems, format_table, write_reports_csv
from pdflow.solver import SolverParams


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--csv", default=None)
    ap.add_argument("--workers", type=int, default=None, help="default: PDFLOW_THREADS or 1")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    t0 = time.perf_counter()
    reports = bench_convergence(bench_problems(args.size), SolverParams(), DEFAULT_THRESHOLDS, workers=args.workers)
    print(format_table(reports))
    print(f"elapsed {time.perf_counter() - t0:.1f} s")
    if args.csv:
        write_reports_csv(reports, args.csv)


if __name__ == "__main__":
    main()
