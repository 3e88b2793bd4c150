"""Marginal characteristic function of a stable-driven CAR(1) field.

The marginal of ``Y(t)`` is again symmetric stable; its characteristic
function from quadrature is printed next to the closed form
``exp(-eta |u|^alpha / (alpha^d prod |lambda_k|))`` and the empirical
characteristic function of a simulated field.
"""

import argparse

import numpy as np

from carma_fields.model import LevyBasisSpec, ModelSpec
from carma_fields.moments import marginal_char_function
from carma_fields.simulate import LatticeGrid, simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", type=float, default=1.5)
    ap.add_argument("--size", type=int, default=48)
    ap.add_argument("--replicates", type=int, default=60)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    spec = ModelSpec.carma([[1, 1], [1, 2]], [1])
    levy = LevyBasisSpec.stable(args.alpha, 1.0)
    u = np.array([0.25, 0.5, 1.0, 2.0])
    closed = np.exp(-np.abs(u) ** args.alpha / (args.alpha ** 2 * 1.0 * 2.0))
    quad = marginal_char_function(spec, levy, u).real

    grid = LatticeGrid.regular((args.size, args.size), 0.5)
    # points 4 cells apart keep the sample nearly independent
    Y = np.concatenate([simulate(spec, levy, grid, "convolution", args.seed, r, refine=2).values[::4, ::4].ravel()
                        for r in range(args.replicates)])
    emp = np.cos(u[:, None] * Y[None, :]).mean(axis=1)
    print(f"alpha = {args.alpha}, {Y.size} samples")
    print("    u     closed   quadrature   empirical")
    for row in zip(u, closed, quad, emp):
        print("{:5.2f}  {:9.6f}  {:11.6f}  {:10.4f}".format(*row))


if __name__ == "__main__":
    main()
