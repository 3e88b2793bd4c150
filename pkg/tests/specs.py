"""Random valid model generators shared by the tests."""

import numpy as np

from carma_fields.algebra import Polynomial
from carma_fields.model import ModelSpec


def random_roots(rng: np.random.Generator, p: int) -> list[complex]:
    """Distinct roots with negative real parts; a conjugate pair when p >= 2 half of the time."""
    roots: list[complex] = []
    if p >= 2 and rng.random() < 0.5:
        z = complex(-rng.uniform(0.4, 2.0), rng.uniform(0.2, 1.5))
        roots += [z, z.conjugate()]
    while len(roots) < p:
        x = -rng.uniform(0.3, 2.5)
        if all(abs(x - r) > 0.1 for r in roots):
            roots.append(complex(x))
    return roots


def random_carma(rng: np.random.Generator, d: int, p: int, q: int | None = None) -> ModelSpec:
    if q is None:
        q = int(rng.integers(0, p))
    polys = [Polynomial.from_roots(random_roots(rng, p)) for _ in range(d)]
    b = np.zeros(p)
    b[: q + 1] = rng.uniform(0.3, 1.5, q + 1) * rng.choice([-1.0, 1.0], q + 1)
    return ModelSpec.carma(polys, b, q)
