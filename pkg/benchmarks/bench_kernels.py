"""Time the compiled geometry kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py --boxes 2000 --dim 2 --repeat 3

Both backends get the same random box sets and must agree before timings
are printed.
"""
import argparse
import sys
import timeit

import numpy as np

from nsprivacy import _pykernels

try:
    from nsprivacy import _ckernels
except ImportError:
    _ckernels = None


def random_boxes(rng, k, n, scale=0.05):
    lo = rng.random((k, n))
    hi = lo + scale * rng.random((k, n))
    return lo, hi


def cases(lo, hi):
    t = np.maximum(hi - lo.min(axis=0), hi.max(axis=0) - lo)
    ub = np.sqrt(np.einsum("ij,ij->i", t, t))
    order = np.argsort(-ub, kind="stable")
    return {
        "union_measure": lambda m: m.union_measure(lo, hi),
        "max_box_distance": lambda m: m.max_box_distance(lo, hi, order, ub, 0.0)[0],
        "touching_components": lambda m: m.touching_components(lo, hi),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--boxes", type=int, default=2000)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels are not built; nothing to compare", file=sys.stderr)
        return 1
    rng = np.random.default_rng(args.seed)
    lo, hi = random_boxes(rng, args.boxes, args.dim)
    print(f"{args.boxes} boxes in R^{args.dim}, best of {args.repeat}")
    print(f"{'kernel':<22}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}")
    for name, fn in cases(lo, hi).items():
        a, b = fn(_pykernels), fn(_ckernels)
        if not np.allclose(a, b, rtol=1e-12, atol=0):
            print(f"{name}: backends disagree ({a!r} vs {b!r})", file=sys.stderr)
            return 2
        tp = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat))
        tc = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat))
        print(f"{name:<22}{tp:>12.4f}{tc:>12.4f}{tp / tc:>10.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
