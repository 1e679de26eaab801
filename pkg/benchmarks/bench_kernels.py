#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--iterations N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from gatewatch.kernels import _fallback

try:
    from gatewatch.kernels import _native
except ImportError:
    _native = None


def bench(fn, args, iterations):
    fn(*args)  # warm up
    started = time.perf_counter()
    for _ in range(iterations):
        fn(*args)
    return (time.perf_counter() - started) / iterations


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--iterations", type=int, default=200)
    args = parser.parse_args()

    rng = np.random.default_rng(7)
    chip = rng.integers(0, 256, size=(128, 128), dtype=np.uint8)
    frame_a = rng.integers(0, 256, size=(480, 640), dtype=np.uint8)
    frame_b = rng.integers(0, 256, size=(480, 640), dtype=np.uint8)

    cases = [
        ("lbp_code_image 128x128", "lbp_code_image", (chip,)),
        ("count_exceeding 480x640", "count_exceeding", (frame_a, frame_b, 25)),
    ]

    print(f"{'kernel':<26} {'python':>12} {'native':>12} {'speedup':>9}")
    for label, name, call_args in cases:
        python_s = bench(getattr(_fallback, name), call_args, args.iterations)
        row = f"{label:<26} {python_s * 1e6:>10.1f}us"
        if _native is None:
            print(row + f" {'(not built)':>12} {'-':>9}")
            continue
        native_s = bench(getattr(_native, name), call_args, args.iterations)
        print(row + f" {native_s * 1e6:>10.1f}us {python_s / native_s:>8.1f}x")

        out_py = getattr(_fallback, name)(*call_args)
        out_nat = getattr(_native, name)(*call_args)
        equal = (
            np.array_equal(out_py, out_nat)
            if isinstance(out_py, np.ndarray)
            else out_py == out_nat
        )
        assert equal, f"{name}: implementations disagree"
    print("implementations agree bitwise on benchmark inputs")


if __name__ == "__main__":
    main()
