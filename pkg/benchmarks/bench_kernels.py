"""Time the compiled raster kernels against the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat N] [--size S]

Every kernel is run on the same inputs with both backends; the outputs are
checked for equality before timing so a speedup never hides a divergence.
"""

import argparse
import sys
import timeit

import numpy as np

from parsingeval import kernels


def cases(size, rng):
    labels = rng.integers(0, 20, size=(size, size)).astype(np.uint8)
    other = rng.integers(0, 20, size=(size, size)).astype(np.uint8)
    grid = rng.random((size // 4, size // 4))
    local = rng.integers(0, 20, size=(size // 2, size // 2)).astype(np.uint8)
    top = np.ascontiguousarray(labels[: size // 2])
    left = np.ascontiguousarray(other[:, : size // 2])

    def paste(mod):
        canvas = np.zeros((size, size), np.uint8)
        mod.paste(canvas, local, size // 4, size // 4)
        return canvas

    return {
        "confusion": lambda m: m.confusion(labels, other, 20),
        "pair_overlap": lambda m: m.pair_overlap(top, 0, 0, left, 3, 5, 20),
        "paste": paste,
        "max_pool": lambda m: m.max_pool(grid, 4),
        "resize_bilinear": lambda m: m.resize_bilinear(grid, size, size),
        "resize_nearest": lambda m: m.resize_nearest(labels, size // 3 + 1, size * 2 // 3 + 1),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--size", type=int, default=512)
    args = p.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled backend not available; only the fallback can be timed", file=sys.stderr)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16} " + " ".join(f"{name + ' ms':>12}" for name in backends) + "   speedup")
    for name, fn in cases(args.size, rng).items():
        outs = {b: fn(mod) for b, mod in backends.items()}
        ref = outs["python"]
        if not all(same(ref, o) for o in outs.values()):
            raise SystemExit(f"{name}: backends disagree")
        ms = {b: 1e3 * min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
              for b, mod in backends.items()}
        speed = f"{ms['python'] / ms['cython']:8.1f}x" if "cython" in ms else "       -"
        print(f"{name:<16} " + " ".join(f"{v:12.3f}" for v in ms.values()) + "  " + speed)


if __name__ == "__main__":
    main()
