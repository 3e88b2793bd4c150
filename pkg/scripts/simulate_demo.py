"""Compare the three samplers on a Gaussian CAR(1) plane field.

For each method the lattice autocovariance at a few lags is averaged over
replicates and printed next to the exact values.
"""

import argparse
import time

import numpy as np

from carma_fields.model import LevyBasisSpec, ModelSpec
from carma_fields.moments import autocovariance
from carma_fields.simulate import GaussianExactSampler, LatticeGrid, simulate

LAGS = [(0, 0), (1, 0), (0, 1), (1, 1), (1, -1)]


def lag_mean(Y, h):
    a, b = h
    n1, n2 = Y.shape
    x = Y[max(0, -a):n1 - max(0, a), max(0, -b):n2 - max(0, b)]
    y = Y[max(0, a):n1 - max(0, -a) or None, max(0, b):n2 - max(0, -b) or None]
    return float(np.mean(x * y))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--spacing", type=float, default=0.5)
    ap.add_argument("--replicates", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    spec = ModelSpec.carma([[1, 1], [1, 1]], [1])
    levy = LevyBasisSpec.gaussian(1.0)
    grid = LatticeGrid.regular((args.size, args.size), args.spacing)
    exact = autocovariance(spec, levy, args.spacing * np.array(LAGS, dtype=float))
    print("lag            " + "  ".join(f"{str(h):>9}" for h in LAGS))
    print("exact          " + "  ".join(f"{v:9.5f}" for v in exact))
    methods = [("convolution", {"refine": 2}), ("car1", {})]
    if grid.size <= 4096:
        # one covariance factor serves every replicate
        methods.insert(1, ("gaussian-exact", {"sampler": GaussianExactSampler(spec, levy, grid.points())}))
    for method, kw in methods:
        t0 = time.perf_counter()
        acc = np.zeros(len(LAGS))
        for r in range(args.replicates):
            Y = simulate(spec, levy, grid, method, args.seed, r, **kw).values
            acc += [lag_mean(Y, h) for h in LAGS]
        acc /= args.replicates
        dt = time.perf_counter() - t0
        print(f"{method:<15}" + "  ".join(f"{v:9.5f}" for v in acc) + f"   ({dt:.1f}s)")


if __name__ == "__main__":
    main()
