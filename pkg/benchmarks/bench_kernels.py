#!/usr/bin/env python3
"""Benchmark the compiled convolution/pooling kernels against the numpy
fallback on the layer shapes the shipped networks actually use.

Usage: python benchmarks/bench_kernels.py [--quick] [--batch N]
"""

import argparse
import time

import numpy as np

from rffid.nn import backend

# (channels_in, height, width, channels_out) per conv stage of the `small`
# prediction network on a 64x64 spectrogram
CONV_STAGES = [
    (1, 64, 64, 8),
    (8, 32, 32, 16),
    (16, 16, 16, 32),
    (32, 8, 8, 32),
]


def _time(fn, repeats: int) -> float:
    fn()  # warm up
    started = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - started) / repeats


def bench_backend(name: str, batch: int, repeats: int) -> dict:
    backend.set_backend(name)
    kernels = backend.active()
    rng = np.random.default_rng(0)
    rows = []
    total_forward = total_backward = 0.0
    for cin, height, width, cout in CONV_STAGES:
        x = rng.standard_normal((batch, cin, height, width))
        w = rng.standard_normal((cout, cin, 3, 3))
        b = rng.standard_normal(cout)
        y = kernels.conv3x3_forward(x, w, b)
        dy = rng.standard_normal(y.shape)
        t_fwd = _time(lambda: kernels.conv3x3_forward(x, w, b), repeats)
        t_bwd = _time(lambda: kernels.conv3x3_backward(x, w, dy), repeats)
        pooled, idx = kernels.maxpool2x2_forward(y)
        t_pool = _time(lambda: kernels.maxpool2x2_forward(y), repeats)
        rows.append((f"conv {cin:3d}->{cout:3d} {height}x{width}",
                     t_fwd, t_bwd, t_pool))
        total_forward += t_fwd
        total_backward += t_bwd
    return {"rows": rows, "forward": total_forward, "backward": total_backward}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="fewer repeats")
    parser.add_argument("--batch", type=int, default=16)
    args = parser.parse_args()
    repeats = 3 if args.quick else 10

    names = []
    try:
        backend.set_backend("cython")
        names.append("cython")
    except Exception:
        print("compiled backend unavailable; benchmarking numpy only")
    names.append("numpy")

    results = {}
    for name in names:
        results[name] = bench_backend(name, args.batch, repeats)
        print(f"\nbackend={name}  batch={args.batch}")
        print(f"  {'stage':24s} {'fwd ms':>9s} {'bwd ms':>9s} {'pool ms':>9s}")
        for label, t_fwd, t_bwd, t_pool in results[name]["rows"]:
            print(f"  {label:24s} {t_fwd*1e3:9.3f} {t_bwd*1e3:9.3f} {t_pool*1e3:9.3f}")
        print(f"  {'TOTAL':24s} {results[name]['forward']*1e3:9.3f} "
              f"{results[name]['backward']*1e3:9.3f}")

    if len(results) == 2:
        speed_f = results["numpy"]["forward"] / results["cython"]["forward"]
        speed_b = results["numpy"]["backward"] / results["cython"]["backward"]
        print(f"\ncython speedup over numpy: forward x{speed_f:.2f}, "
              f"backward x{speed_b:.2f}")
    backend.set_backend("auto")


if __name__ == "__main__":
    main()
