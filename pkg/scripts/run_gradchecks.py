#!/usr/bin/env python3
"""Run every finite-difference gradient check and print a report.

Usage:
    python3 scripts/run_gradchecks.py [--tol 1e-4] [--eps 1e-5]
"""

import argparse
import sys
import time

from talnet.checks import run_all


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--tol", type=float, default=1e-4)
    parser.add_argument("--eps", type=float, default=1e-5)
    args = parser.parse_args()

    t0 = time.time()
    reports = run_all(tol=args.tol, eps=args.eps)
    ok = True
    for name, rep in reports.items():
        status = "PASS" if rep.passed else "FAIL"
        worst = rep.worst[0].rel_err if rep.worst else 0.0
        print(f"{status} {name}: worst rel err {worst:.3e} over {rep.checked} coordinates")
        ok &= rep.passed
    print(f"total: {time.time() - t0:.1f}s")
    return 0 if ok else 3


if __name__ == "__main__":
    sys.exit(main())
