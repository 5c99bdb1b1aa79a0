"""Time the compiled and NumPy conv kernels on a combiner-sized problem.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from fusesep import _conv_py

try:
    from fusesep import _conv
except ImportError:
    _conv = None

SHAPES = {
    "desk trunk (B=3, 8->16, 257x63)": (3, 8, 16, 257, 63),
    "input layer (B=3, 4->8, 257x63)": (3, 4, 8, 257, 63),
    "full trunk (B=1, 64->64, 257x63)": (1, 64, 64, 257, 63),
}


def bench(impl, shape, repeat):
    B, Ci, Co, H, W = shape
    rng = np.random.default_rng(0)
    x = rng.standard_normal((B, Ci, H, W))
    w = rng.standard_normal((Co, Ci, 3, 3))
    b = rng.standard_normal(Co)
    gy = rng.standard_normal((B, Co, H, W))
    fwd = min(timeit.repeat(lambda: impl.conv3x3_forward(x, w, b), number=1, repeat=repeat))
    bwd = min(timeit.repeat(lambda: impl.conv3x3_backward(x, w, gy), number=1, repeat=repeat))
    return fwd, bwd


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    impls = [("numpy", _conv_py)] + ([("compiled", _conv)] if _conv is not None else [])
    if _conv is None:
        print("compiled extension not built; timing the NumPy path only")
    print(f"{'problem':36s} {'backend':9s} {'forward s':>10s} {'backward s':>11s}")
    for name, shape in SHAPES.items():
        results = {}
        for label, impl in impls:
            results[label] = bench(impl, shape, args.repeat)
            f, bk = results[label]
            print(f"{name:36s} {label:9s} {f:10.4f} {bk:11.4f}")
        if len(results) == 2:
            (nf, nb), (cf, cb) = results["numpy"], results["compiled"]
            print(f"{'':36s} {'speedup':9s} {nf / cf:9.2f}x {nb / cb:10.2f}x")


if __name__ == "__main__":
    main()
