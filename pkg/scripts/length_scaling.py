#!/usr/bin/env python3
"""Erased-length scaling experiment.

Samples loop-erased crossings over a range of levels and prints the mean
lengths, their ratios, and the exact branching predictions they chase.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from gasket_lerw.eraser import loop_erase
from gasket_lerw.exact import length_mean, spectral_data
from gasket_lerw.walker import CrossingVariant, replica_rng, sample_crossing


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--levels", type=int, nargs="+", default=[3, 4, 5, 6])
    parser.add_argument("--samples", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--method", choices=["rejection", "hierarchical"], default="hierarchical")
    args = parser.parse_args()

    lam = float(spectral_data().lam)
    print(f"growth rate lambda = {lam:.6f}")
    print(f"{'N':>3} {'mean':>10} {'exact':>10} {'scaled':>8} {'ratio':>7} {'secs':>6}")
    prev = None
    for level in args.levels:
        rng = replica_rng(args.seed, level)
        started = time.perf_counter()
        lens = np.array(
            [
                len(loop_erase(sample_crossing(level, CrossingVariant.DIRECT, args.method, rng))) - 1
                for _ in range(args.samples)
            ],
            dtype=float,
        )
        elapsed = time.perf_counter() - started
        mean = lens.mean()
        ratio = mean / prev if prev else float("nan")
        prev = mean
        print(
            f"{level:>3} {mean:>10.2f} {float(length_mean(level)):>10.2f} "
            f"{mean * lam**-level:>8.4f} {ratio:>7.3f} {elapsed:>6.1f}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
