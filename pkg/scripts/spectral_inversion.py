"""Inverse Fourier transform of the spectral density on growing boxes.

On the plane a CARMA kernel jumps across the coordinate axes, so the
spectral density decays only like ``|w_k|^-2`` along each axis and a
truncated inversion converges slowly.  The script prints the error of the
trapezoidal inversion on ``[-L, L]^2`` for several ``L`` together with the
Richardson combination ``2 I(2L) - I(L)``.
"""

import argparse

import numpy as np

from carma_fields.documents import load_model
from carma_fields.moments import autocovariance, spectral_density


def invert(spec, levy, lags, L, h):
    n = int(round(2 * L / h)) + 1
    w = np.linspace(-L, L, n)
    wt = np.full(n, w[1] - w[0])
    wt[[0, -1]] /= 2
    W1, W2 = np.meshgrid(w, w, indexing="ij")
    f = spectral_density(spec, levy, np.column_stack([W1.ravel(), W2.ravel()])).reshape(n, n)
    return np.array([np.einsum("i,j,ij->", wt, wt, f * np.cos(W1 * a + W2 * b)) for a, b in lags])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("model", nargs="?", default="models/carma21_plane.json")
    ap.add_argument("--step", type=float, default=0.05)
    args = ap.parse_args()
    spec, levy = load_model(args.model)
    lags = np.array([(0, 0), (1, 0), (0, 1), (1, 1), (1, -1)], dtype=float)
    exact = autocovariance(spec, levy, lags)
    prev = None
    for L in (20.0, 40.0, 80.0):
        inv = invert(spec, levy, lags, L, args.step)
        line = f"L = {L:5.0f}  max err {np.max(np.abs(inv - exact)):.2e}"
        if prev is not None:
            line += f"   Richardson max err {np.max(np.abs(2 * inv - prev - exact)):.2e}"
        print(line)
        prev = inv


if __name__ == "__main__":
    main()
