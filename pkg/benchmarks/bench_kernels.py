"""Time the numba and pure-numpy segment kernels on batch-shaped inputs.

    python benchmarks/bench_kernels.py [--repeat 20]

Shapes mimic a training batch: edges x hidden for message sums, nodes x hidden
for per-graph pooling maxima. The numba column excludes JIT compilation.
"""

import argparse
import timeit

import numpy as np

from mlap2seq import kernels

SHAPES = [
    # rows, width, segments
    (2_000, 64, 400),
    (20_000, 64, 4_000),
    (100_000, 128, 20_000),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if kernels.segment_sum_numba is None:
        raise SystemExit("numba is not installed; only the numpy backend is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':12s} {'rows':>8s} {'width':>6s} {'segs':>7s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for rows, width, segs in SHAPES:
        values = rng.normal(size=(rows, width)).astype(np.float32)
        ids = np.sort(rng.integers(0, segs, size=rows))
        for name in ("segment_sum", "segment_max"):
            fast = getattr(kernels, f"{name}_numba")
            slow = getattr(kernels, f"{name}_numpy")
            np.testing.assert_allclose(fast(values, ids, segs), slow(values, ids, segs), rtol=1e-5, atol=1e-5)
            t_np = min(timeit.repeat(lambda: slow(values, ids, segs), number=1, repeat=args.repeat)) * 1e3
            t_nb = min(timeit.repeat(lambda: fast(values, ids, segs), number=1, repeat=args.repeat)) * 1e3
            print(f"{name:12s} {rows:8d} {width:6d} {segs:7d} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
