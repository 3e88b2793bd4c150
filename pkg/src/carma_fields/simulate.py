"""Sampling CARMA fields on regular lattices.

Three samplers are available:

* :func:`simulate_convolution` discretises ``Y(t) = int g(t - s) Lambda(ds)``
  on cells of the lattice spacing (midpoint rule, truncated kernel), for any
  noise family;
* :func:`simulate_gaussian_exact` draws the exact finite-dimensional law of a
  Gaussian field from its covariance matrix;
* :func:`simulate_car1_recursion` uses the exact AR lattice recursion of a
  CAR(1) field on the plane.

Every sampler takes a ``numpy.random.Generator``.  :func:`replicate_rng`
derives the generator of replicate ``r`` from ``(seed, r)``, so replicates
are independent and reproducible regardless of the order they are run in.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import fftconvolve, lfilter

from .errors import ModelError, SimulationError
from .kernel import kernel_grid
from .model import CompoundPoisson, LevyBasisSpec, ModelSpec, SymmetricStable
from .moments import autocovariance, mean

DEFAULT_MAX_CELLS = 2 ** 26
DEFAULT_MAX_EXACT_POINTS = 4096


def replicate_rng(seed: int, replicate: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(replicate)]))


@dataclass(frozen=True)
class LatticeGrid:
    """Regular lattice ``origin + n * spacing`` with ``0 <= n_k < extents[k]``."""

    origin: tuple[float, ...]
    spacing: tuple[float, ...]
    extents: tuple[int, ...]

    def __post_init__(self):
        d = len(self.extents)
        object.__setattr__(self, "origin", tuple(float(x) for x in np.broadcast_to(self.origin, d)))
        object.__setattr__(self, "spacing", tuple(float(x) for x in np.broadcast_to(self.spacing, d)))
        object.__setattr__(self, "extents", tuple(int(x) for x in self.extents))
        if any(h <= 0 for h in self.spacing):
            raise ModelError("lattice spacing must be positive")
        if any(n < 1 for n in self.extents):
            raise ModelError("lattice extents must be positive")

    @classmethod
    def regular(cls, extents: Sequence[int], spacing=1.0, origin=0.0) -> "LatticeGrid":
        return cls(origin, spacing, tuple(extents))

    @property
    def d(self) -> int:
        return len(self.extents)

    @property
    def size(self) -> int:
        return int(np.prod(self.extents))

    def axes(self) -> list[np.ndarray]:
        return [o + h * np.arange(n) for o, h, n in zip(self.origin, self.spacing, self.extents)]

    def points(self) -> np.ndarray:
        """All lattice points in row-major order, shape ``(size, d)``."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass
class LatticeField:
    grid: LatticeGrid
    values: np.ndarray
    seed: tuple[int, int] | None = None
    method: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.extents)
        if not np.all(np.isfinite(self.values)):
            raise SimulationError("simulated field contains non-finite values")

    def to_csv(self, path) -> None:
        pts = self.grid.points()
        header = [f"t{k + 1}" for k in range(self.grid.d)] + ["value"]
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            rows = np.column_stack([pts, self.values.ravel()])
            np.savetxt(fh, rows, fmt="%.17g", delimiter=",")

    @classmethod
    def from_csv(cls, path, spacing=None) -> "LatticeField":
        with open(path, newline="") as fh:
            header = next(csv.reader(fh))
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        d = len(header) - 1
        axes = [np.unique(data[:, k]) for k in range(d)]
        extents = tuple(len(a) for a in axes)
        if spacing is None:
            spacing = tuple(float(np.mean(np.diff(a))) if len(a) > 1 else 1.0 for a in axes)
        grid = LatticeGrid(tuple(a[0] for a in axes), spacing, extents)
        return cls(grid, data[:, -1].reshape(extents))


# --- cell noise ------------------------------------------------------------------


def _standard_symmetric_stable(alpha: float, rng: np.random.Generator, size) -> np.ndarray:
    """Chambers-Mallows-Stuck draws with characteristic function ``exp(-|u|**alpha)``."""
    V = rng.uniform(-np.pi / 2, np.pi / 2, size)
    W = rng.exponential(1.0, size)
    if alpha == 1.0:
        return np.tan(V)
    return (np.sin(alpha * V) / np.cos(V) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * V) / W) ** ((1.0 - alpha) / alpha))


def sample_cell(levy: LevyBasisSpec, volume: float, rng: np.random.Generator, size=None):
    """Draw ``Lambda(cell)`` for cells of the given volume; ``size`` as in numpy."""
    if volume <= 0:
        raise ModelError("cell volume must be positive")
    shape = () if size is None else (size if isinstance(size, tuple) else (int(size),))
    out = np.full(shape, levy.compensated_drift * volume, dtype=float)
    if levy.sigma2 > 0:
        out = out + rng.normal(0.0, np.sqrt(levy.sigma2 * volume), shape)
    jumps = levy.jumps
    if isinstance(jumps, CompoundPoisson):
        counts = rng.poisson(jumps.rate * volume, shape)
        sizes = jumps.law.sample(rng, int(counts.sum()))
        owner = np.repeat(np.arange(counts.size), counts.ravel())
        out = out + np.bincount(owner, weights=sizes, minlength=counts.size).reshape(shape)
    elif isinstance(jumps, SymmetricStable):
        scale = (jumps.eta * volume) ** (1.0 / jumps.alpha)
        out = out + scale * _standard_symmetric_stable(jumps.alpha, rng, shape)
    return float(out) if size is None else out


# --- convolution sampler ---------------------------------------------------------


def truncation_lengths(spec: ModelSpec, spacing: Sequence[float], trunc_tol: float) -> list[int]:
    """Kernel support per axis, in cells: ``ceil(log(1/tol) / min|Re lambda_k| / h_k)``."""
    if not 0 < trunc_tol < 1:
        raise ModelError("trunc_tol must lie in (0, 1)")
    return [int(np.ceil(np.log(1.0 / trunc_tol) / s.min_abs_real / h))
            for s, h in zip(spec.spectra, spacing)]


def simulate_convolution(spec: ModelSpec, levy: LevyBasisSpec, grid: LatticeGrid,
                         rng: np.random.Generator, trunc_tol: float = 1e-6,
                         max_cells: int = DEFAULT_MAX_CELLS, refine: int = 1) -> LatticeField:
    """``Y(t_n) ~ sum_{j >= 0} g((j + 1/2) h) Lambda(C_{n-j})`` with ``C_m`` the cell ending at ``t_m``.

    With ``refine = r`` the noise lives on cells of side ``h / r`` and every
    ``r``-th point of the fine field is returned, which shrinks the midpoint
    bias by roughly ``r**2``.
    """
    if grid.d != spec.d:
        raise ModelError("grid and model dimensions differ")
    r = int(refine)
    if r < 1:
        raise ModelError("refine must be a positive integer")
    fine = tuple(h / r for h in grid.spacing)
    extents = tuple((n - 1) * r + 1 for n in grid.extents)
    M = truncation_lengths(spec, fine, trunc_tol)
    noise_shape = tuple(n + m - 1 for n, m in zip(extents, M))
    if int(np.prod(noise_shape, dtype=float)) > max_cells:
        raise SimulationError(
            f"truncated kernel needs {int(np.prod(noise_shape, dtype=float))} noise cells "
            f"(budget {max_cells}); raise trunc_tol or coarsen the grid")
    volume = float(np.prod(fine))
    K = kernel_grid(spec, [(np.arange(m) + 0.5) * h for m, h in zip(M, fine)])
    noise = sample_cell(levy, volume, rng, noise_shape)
    values = fftconvolve(noise, K, mode="valid")[(slice(None, None, r),) * spec.d]
    return LatticeField(grid, values, method="convolution", meta={"truncation": M, "refine": r})


# --- exact Gaussian sampler ------------------------------------------------------


def _require_gaussian(levy: LevyBasisSpec):
    if not levy.is_gaussian:
        raise ModelError("exact sampling needs purely Gaussian noise (no jumps)")


class GaussianExactSampler:
    """Exact joint sampler of ``(Y(t_1), ..., Y(t_n))`` for Gaussian noise.

    The covariance factor is computed once and reused across draws.
    """

    def __init__(self, spec: ModelSpec, levy: LevyBasisSpec, points: np.ndarray,
                 max_points: int = DEFAULT_MAX_EXACT_POINTS, jitter_budget: float = 1e-8):
        _require_gaussian(levy)
        pts = np.asarray(points, dtype=float).reshape(-1, spec.d)
        if len(pts) > max_points:
            raise SimulationError(f"{len(pts)} points exceed the exact-sampling limit {max_points}")
        self.points = pts
        self.mean = mean(spec, levy)
        self.cov = _covariance_matrix(spec, levy, pts)
        self.factor = _psd_factor(self.cov, jitter_budget)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal(len(self.points))
        return self.mean + self.factor @ z


def _covariance_matrix(spec, levy, pts: np.ndarray) -> np.ndarray:
    diff = pts[None, :, :] - pts[:, None, :]
    flat = diff.reshape(-1, spec.d)
    # stationarity: evaluate each distinct lag once
    lags, inverse = np.unique(np.round(flat, 12), axis=0, return_inverse=True)
    vals = np.atleast_1d(autocovariance(spec, levy, lags if spec.d > 1 else lags[:, 0]))
    C = vals[np.ravel(inverse)].reshape(len(pts), len(pts))
    return 0.5 * (C + C.T)


def _psd_factor(C: np.ndarray, jitter_budget: float) -> np.ndarray:
    scale = max(float(np.mean(np.diag(C))), np.finfo(float).tiny)
    jitter = 0.0
    while True:
        try:
            return np.linalg.cholesky(C + jitter * scale * np.eye(len(C)))
        except np.linalg.LinAlgError:
            jitter = 1e-14 if jitter == 0 else jitter * 10
            if jitter > jitter_budget:
                raise SimulationError("covariance matrix is not positive semi-definite within the jitter budget")


def simulate_gaussian_exact(spec: ModelSpec, levy: LevyBasisSpec, grid: LatticeGrid,
                            rng: np.random.Generator,
                            max_points: int = DEFAULT_MAX_EXACT_POINTS,
                            sampler: GaussianExactSampler | None = None) -> LatticeField:
    if grid.d != spec.d:
        raise ModelError("grid and model dimensions differ")
    if sampler is None:
        sampler = GaussianExactSampler(spec, levy, grid.points(), max_points=max_points)
    return LatticeField(grid, sampler.sample(rng), method="gaussian-exact")


# --- CAR(1) recursion ------------------------------------------------------------


def _car1_params(spec: ModelSpec):
    if spec.p != 1 or spec.d != 2:
        raise ModelError("the CAR(1) recursion needs p = 1 and d = 2")
    lam1 = float(spec.axis_matrices[0][0, 0])
    lam2 = float(spec.axis_matrices[1][0, 0])
    return lam1, lam2, float(spec.b[0] * spec.c[0])


def car1_innovation_moments(spec: ModelSpec, levy: LevyBasisSpec, spacing=(1.0, 1.0)):
    """Mean and variance of ``Z = int_cell bc e^{lambda_1 (t_1 - s_1) + lambda_2 (t_2 - s_2)} Lambda(ds)``."""
    lam1, lam2, bc = _car1_params(spec)
    h1, h2 = spacing
    k1, k2 = levy.kappa1, levy.kappa2
    m = None if k1 is None else k1 * bc * np.expm1(lam1 * h1) * np.expm1(lam2 * h2) / (lam1 * lam2)
    v = None if k2 is None else (k2 * bc ** 2 * np.expm1(2 * lam1 * h1) * np.expm1(2 * lam2 * h2)
                                 / (4 * lam1 * lam2))
    return m, v


def _boundary_by_convolution(spec, levy, grid, rng, trunc_tol):
    """Field values on the first row and column from noise outside the interior quadrant."""
    n1, n2 = grid.extents
    M = truncation_lengths(spec, grid.spacing, trunc_tol)
    K = kernel_grid(spec, [(np.arange(m) + 0.5) * h for m, h in zip(M, grid.spacing)])
    volume = grid.spacing[0] * grid.spacing[1]
    shape = (n1 + M[0] - 1, n2 + M[1] - 1)
    noise = sample_cell(levy, volume, rng, shape)
    # cells strictly inside the quadrant drive the interior only; they enter via the innovations
    noise[M[0]:, M[1]:] = 0.0
    full = fftconvolve(noise, K, mode="valid")
    return full[0, :], full[:, 0]


def _innovations_by_subcells(spec, levy, grid, rng, shape, substeps):
    lam1, lam2, bc = _car1_params(spec)
    h1, h2 = grid.spacing
    u = (np.arange(substeps) + 0.5) / substeps
    w = bc * np.exp(lam1 * h1 * (1 - u))[:, None] * np.exp(lam2 * h2 * (1 - u))[None, :]
    sub = sample_cell(levy, h1 * h2 / substeps ** 2, rng, shape + (substeps, substeps))
    return np.einsum("...ab,ab->...", sub, w)


def simulate_car1_recursion(spec: ModelSpec, levy: LevyBasisSpec, grid: LatticeGrid,
                            rng: np.random.Generator, substeps: int = 8,
                            trunc_tol: float = 1e-6) -> LatticeField:
    """CAR(1) field on the plane via ``Y_t = phi_1 Y_{t-e1} + phi_2 Y_{t-e2} - phi_1 phi_2 Y_{t-e1-e2} + Z_t``.

    Gaussian noise: the first row and column are drawn exactly and the
    innovations have their exact law, so the whole field is exact.  Jump
    noise: the boundary comes from a truncated convolution and each
    innovation from ``substeps**2`` sub-cells.
    """
    lam1, lam2, _ = _car1_params(spec)
    if grid.d != 2:
        raise ModelError("the CAR(1) recursion runs on a planar lattice")
    n1, n2 = grid.extents
    h1, h2 = grid.spacing
    phi1, phi2 = np.exp(lam1 * h1), np.exp(lam2 * h2)

    Y = np.zeros((n1, n2))
    if levy.is_gaussian:
        o1, o2 = grid.origin
        strip = np.concatenate([
            np.column_stack([np.full(n2, o1), o2 + h2 * np.arange(n2)]),
            np.column_stack([o1 + h1 * np.arange(1, n1), np.full(n1 - 1, o2)]),
        ])
        vals = GaussianExactSampler(spec, levy, strip, max_points=n1 + n2).sample(rng)
        Y[0, :] = vals[:n2]
        Y[1:, 0] = vals[n2:]
        m, v = car1_innovation_moments(spec, levy, grid.spacing)
        Z = m + np.sqrt(v) * rng.standard_normal((n1 - 1, n2 - 1))
    else:
        row, col = _boundary_by_convolution(spec, levy, grid, rng, trunc_tol)
        Y[0, :] = row
        Y[:, 0] = col
        Z = _innovations_by_subcells(spec, levy, grid, rng, (n1 - 1, n2 - 1), substeps)

    # sweep rows; within a row this is a first-order filter along axis 2
    for i in range(1, n1):
        drive = phi1 * Y[i - 1, 1:] - phi1 * phi2 * Y[i - 1, :-1] + Z[i - 1]
        Y[i, 1:], _ = lfilter([1.0], [1.0, -phi2], drive, zi=[phi2 * Y[i, 0]])
    return LatticeField(grid, Y, method="car1")


METHODS = {
    "convolution": simulate_convolution,
    "gaussian-exact": simulate_gaussian_exact,
    "car1": simulate_car1_recursion,
}


def check_method(spec: ModelSpec, levy: LevyBasisSpec, method: str) -> None:
    """Raise :class:`ModelError` when ``method`` cannot simulate this model."""
    if method not in METHODS:
        raise ModelError(f"unknown simulation method {method!r}")
    if method == "gaussian-exact":
        _require_gaussian(levy)
    if method == "car1":
        _car1_params(spec)


def simulate(spec: ModelSpec, levy: LevyBasisSpec, grid: LatticeGrid, method: str,
             seed: int, replicate: int = 0, **kwargs) -> LatticeField:
    check_method(spec, levy, method)
    rng = replicate_rng(seed, replicate)
    fld = METHODS[method](spec, levy, grid, rng, **kwargs)
    fld.seed = (int(seed), int(replicate))
    return fld
