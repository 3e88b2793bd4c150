"""Sampled lattice ARMA structure of two diagonal GCARMA fields on the plane.

Prints the AR table, the moving-average autocovariance and the MA(1,1)
matching verdict for a pair with no real MA(1,1) solution and a pair with
several.
"""

import argparse

import numpy as np

from carma_fields.lattice_arma import arma_representation, discrete_spectral_check, ma_match
from carma_fields.model import LevyBasisSpec, ModelSpec

PAIRS = {
    "equal axes": (np.diag([-1.0, -2.0]), np.diag([-1.0, -2.0])),
    "mixed axes": (np.diag([-1.0, -2.0]), np.diag([-1.0, -1.0])),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--starts", type=int, default=2 ** 14)
    args = ap.parse_args()
    np.set_printoptions(precision=6, suppress=True)
    levy = LevyBasisSpec.gaussian(1.0)
    for name, mats in PAIRS.items():
        spec = ModelSpec.gcarma(list(mats), [1, 1], [1, 1])
        rep = arma_representation(spec, levy)
        check = discrete_spectral_check(rep.rhs_acov)
        found = ma_match(rep.rhs_acov, starts=args.starts)
        print(f"== {name}")
        print("AR table\n", rep.ar_coeffs)
        print("gamma_hat\n", rep.rhs_acov)
        print(f"min f = {check['min_f']:.3e}, log-integrable: {check['log_integrable']}")
        print(f"MA(1,1): {found.status}, {len(found.solutions)} solution(s), best residual {found.best_residual:.1e}")
        for s in found.solutions:
            print("   ", np.round(s, 6))


if __name__ == "__main__":
    main()
