#!/usr/bin/env python3
"""Benchmark the compiled convolution kernels against the numpy fallback.

Times forward and backward passes on the stock architecture's layer shapes
plus a full-network forward. Run after building the package:

    python benchmarks/bench_conv3d.py [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from pose3d import backend
from pose3d.network import ArchitectureConfig, build_network, forward
from pose3d.rng import RngState
from pose3d.tensor import Tensor

# (label, input [c,t,h,w], kernel [o,c,kt,kh,kw]) for the stock layers
CASES = [
    ("conv1 3x5x5", (3, 5, 128, 128), (16, 3, 3, 5, 5)),
    ("conv2 2x5x5", (16, 3, 62, 62), (24, 16, 2, 5, 5)),
    ("conv3 1x5x5", (24, 2, 29, 29), (32, 24, 1, 5, 5)),
    ("conv4 1x3x3", (32, 2, 25, 25), (40, 32, 1, 3, 3)),
    ("conv5 1x3x3", (40, 2, 23, 23), (40, 40, 1, 3, 3)),
]


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        tic = time.perf_counter()
        fn()
        times.append(time.perf_counter() - tic)
    return min(times)


def bench_kernels(repeats: int, dtype) -> None:
    impls = backend.available_backends()
    print(f"\nkernel benchmarks ({np.dtype(dtype).name}, best of {repeats})")
    header = f"{'case':<16}" + "".join(f"{name + ' fwd':>14}{name + ' bwd':>14}"
                                       for name in impls)
    print(header)
    rng = np.random.default_rng(0)
    for label, xshape, kshape in CASES:
        x = rng.standard_normal(xshape).astype(dtype)
        k = (0.1 * rng.standard_normal(kshape)).astype(dtype)
        b = np.zeros(kshape[0], dtype=dtype)
        row = f"{label:<16}"
        for name, impl in impls.items():
            out = impl.conv3d_forward(x, k, b)
            g = rng.standard_normal(out.shape).astype(dtype)
            fwd = best_of(lambda: impl.conv3d_forward(x, k, b), repeats)
            bwd = best_of(lambda: impl.conv3d_backward(x, k, g), repeats)
            row += f"{fwd * 1e3:>12.1f}ms{bwd * 1e3:>12.1f}ms"
        print(row)


def bench_full_network(repeats: int, dtype) -> None:
    cfg = ArchitectureConfig()
    params = build_network(cfg, RngState(0), dtype=dtype)
    x = Tensor(np.random.default_rng(1).standard_normal(cfg.input_shape).astype(dtype))
    print(f"\nfull stock-network forward ({np.dtype(dtype).name}, best of {repeats})")
    for name in backend.available_backends():
        backend.conv3d_forward = backend.available_backends()[name].conv3d_forward
        t = best_of(lambda: forward(params, x), repeats)
        print(f"  {name:<8} {t * 1e3:8.1f} ms")
    # restore the import-time selection
    backend.conv3d_forward = backend.available_backends()[backend.ACTIVE_BACKEND].conv3d_forward


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    args = ap.parse_args()
    dtype = np.float32 if args.dtype == "float32" else np.float64

    print(f"active backend: {backend.ACTIVE_BACKEND}"
          f" (native extension {'present' if backend.has_native_extension() else 'absent'})")
    bench_kernels(args.repeats, dtype)
    bench_full_network(args.repeats, dtype)


if __name__ == "__main__":
    main()
