"""Time the numba kernels against their numpy twins.

Usage::

    python benchmarks/bench_kernels.py --size 60 --repeat 5

Each kernel is called once before timing so that numba compilation is not
counted. The numba column is skipped when numba is unavailable or disabled
through ``SPARCH_DISABLE_NUMBA``.
"""

import argparse
import timeit

import numpy as np
import scipy.sparse as sp

from sparch import _kernels, lattice
from sparch.simulate import sample_truncated_normal
from sparch.weights import WeightsMatrix


def _cases(size, reps):
    rng = np.random.default_rng(0)
    n = size * size
    W = WeightsMatrix(sp.tril(lattice(size, size, "queen").matrix, k=-1))
    m = W.matrix
    _, order = _kernels._topo_order_numpy(m.indptr, m.indices, n)
    eps2 = sample_truncated_normal(np.inf, n, rng) ** 2
    Z = rng.standard_normal((reps, n))
    R = lattice(size, size, standardize=True).matrix
    return {
        "lattice_pairs": lambda f: f(size, size, True),
        "topo_order": lambda f: f(m.indptr, m.indices, n),
        "oriented_squares": lambda f: f(order, m.indptr, m.indices, m.data, eps2, 1.0, 0.5),
        "quadforms": lambda f: f(R.indptr, R.indices, R.data, Z),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=60, help="lattice side length (n = size**2)")
    ap.add_argument("--reps", type=int, default=200, help="rows for the batched Moran kernel")
    ap.add_argument("--repeat", type=int, default=5, help="timing repetitions (best is reported)")
    args = ap.parse_args(argv)

    backends = ["numpy"] + (["numba"] if _kernels.USE_NUMBA else [])
    print(f"n = {args.size ** 2}, active backend: {_kernels.BACKEND}")
    print(f"{'kernel':<18}" + "".join(f"{b + ' [ms]':>14}" for b in backends) + f"{'speedup':>10}")
    for name, call in _cases(args.size, args.reps).items():
        times = {}
        for b in backends:
            fn = getattr(_kernels, f"_{name}_{b}")
            call(fn)  # warm-up, includes compilation
            number = 3
            best = min(timeit.repeat(lambda: call(fn), number=number, repeat=args.repeat)) / number
            times[b] = best * 1e3
        speed = times["numpy"] / times["numba"] if "numba" in times else float("nan")
        print(f"{name:<18}" + "".join(f"{times[b]:>14.3f}" for b in backends) + f"{speed:>10.1f}")


if __name__ == "__main__":
    main()
