"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Shapes match what the default segmenter sees: batches of 1-2 images of
64x64 with 1-24 channels, plus a boundary scan between two ellipse outlines.
"""
import argparse
import timeit

import numpy as np

from rlaug import kernels, metrics
from rlaug.dataset import ellipse_mask

CONV_SHAPES = [  # (N, C_in, H, W, C_out)
    (1, 1, 64, 64, 8),
    (2, 8, 64, 64, 8),
    (2, 8, 32, 32, 16),
    (2, 24, 64, 64, 8),
]


def _best(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def bench(repeat):
    mods = kernels.backends()
    rng = np.random.default_rng(0)
    rows = []
    for n, c, h, w, o in CONV_SHAPES:
        x = rng.standard_normal((n, c, h, w)).astype(np.float32)
        wt = rng.standard_normal((o, c, 3, 3)).astype(np.float32)
        b = rng.standard_normal(o).astype(np.float32)
        gy = rng.standard_normal((n, o, h, w)).astype(np.float32)
        for op in ("forward", "backward"):
            times = {}
            for name, mod in mods.items():
                if op == "forward":
                    times[name] = _best(lambda: mod.conv3x3_forward(x, wt, b), repeat, 20)
                else:
                    times[name] = _best(lambda: mod.conv3x3_backward(x, wt, gy), repeat, 20)
            rows.append((f"conv3x3_{op} {n}x{c}x{h}x{w}->{o}", times))
    a = metrics.boundary(ellipse_mask(256, 120, 130, 60, 40, 0.3))
    bb = metrics.boundary(ellipse_mask(256, 128, 128, 55, 45, 1.0))
    times = {name: _best(lambda: mod.min_sq_dists(a, bb), repeat, 5) for name, mod in mods.items()}
    rows.append((f"min_sq_dists {len(a)}x{len(bb)}", times))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rows = bench(args.repeat)
    names = list(rows[0][1])
    print(f"default backend: {kernels.BACKEND}")
    print(f"{'kernel':<40}" + "".join(f"{n + ' (ms)':>16}" for n in names) + f"{'speedup':>10}")
    for label, times in rows:
        line = f"{label:<40}" + "".join(f"{1e3 * times[n]:>16.3f}" for n in names)
        if "compiled" in times:
            line += f"{times['python'] / times['compiled']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
