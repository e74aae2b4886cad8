#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

The pixel-level kernels are where a production deployment spends its
camera-side time: greyscale conversion, per-patch change sums, and the
exhaustive block-matching search behind the interval switcher. Run on a
production-ish frame size:

    python3 benchmarks/bench_kernels.py --width 640 --height 480 --radius 8
"""

import argparse
import time

import numpy as np

from arena._kernels import _numpy as np_impl

try:
    from arena._kernels import _core as c_impl
except ImportError:
    c_impl = None


def time_call(fn, *args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        started = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - started)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--width", type=int, default=640)
    parser.add_argument("--height", type=int, default=480)
    parser.add_argument("--block", type=int, default=16)
    parser.add_argument("--radius", type=int, default=8)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    w = args.width - args.width % args.block
    h = args.height - args.height % args.block
    rng = np.random.default_rng(0)
    rgb = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
    a = rng.integers(0, 256, size=(h, w), dtype=np.uint8)
    b = np.roll(a, 3, axis=1)

    backends = [("numpy", np_impl)]
    if c_impl is not None:
        backends.append(("cython", c_impl))
    else:
        print("compiled kernels unavailable; benchmarking the fallback only")

    cases = [
        ("luma_u8", lambda impl: impl.luma_u8(rgb)),
        ("patch_diff_sums", lambda impl: impl.patch_diff_sums(a, b, args.block)),
        ("block_match", lambda impl: impl.block_match(a, b, args.block,
                                                      args.radius)),
    ]

    print(f"frame {w}x{h}, block {args.block}, radius {args.radius}, "
          f"best of {args.repeat}")
    print(f"{'kernel':<18}" + "".join(f"{name:>12}" for name, _ in backends)
          + ("     speedup" if len(backends) == 2 else ""))
    for case_name, call in cases:
        times = [time_call(lambda impl=impl: call(impl), repeat=args.repeat)
                 for _, impl in backends]
        row = f"{case_name:<18}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>11.1f}x"
        print(row)

    if c_impl is not None:
        same = ((np_impl.luma_u8(rgb) == c_impl.luma_u8(rgb)).all()
                and (np_impl.patch_diff_sums(a, b, args.block)
                     == c_impl.patch_diff_sums(a, b, args.block)).all()
                and (np_impl.block_match(a, b, args.block, args.radius)
                     == c_impl.block_match(a, b, args.block, args.radius)).all())
        print(f"backend outputs bit-identical: {same}")


if __name__ == "__main__":
    main()
