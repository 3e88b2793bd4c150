"""Model and noise specifications.

A :class:`ModelSpec` describes the deterministic part of a causal (G)CARMA
field: per-axis state matrices, the observation vector ``b`` and the input
vector ``c``.  A :class:`LevyBasisSpec` describes the driving homogeneous
Levy basis through its characteristics ``(beta, sigma2, nu)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np
from scipy import integrate, special

from .algebra import CLUSTER_RADIUS, Polynomial, Spectrum, char_poly, companion_matrix, poly_roots
from .errors import ModelError

CARMA = "CARMA"
GCARMA = "GCARMA"


def _frozen_array(x, ndim: int) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.ndim != ndim:
        raise ModelError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Parameterisation of a causal CARMA(p, q) or GCARMA random field on R^d.

    Use :meth:`carma` or :meth:`gcarma` rather than the raw constructor.
    ``b`` is ordered ``(b_0, ..., b_{p-1})`` so that ``b(z) = b_0 + b_1 z + ...``.
    """

    d: int
    p: int
    mode: str
    b: np.ndarray
    c: np.ndarray
    axis_matrices: tuple[np.ndarray, ...]
    axis_polys: tuple[Polynomial, ...] | None = None
    q: int | None = None

    def __post_init__(self):
        if self.mode not in (CARMA, GCARMA):
            raise ModelError(f"unknown mode {self.mode!r}")
        if not 1 <= self.d <= 3:
            raise ModelError("dimension d must be 1, 2 or 3")
        if len(self.axis_matrices) != self.d:
            raise ModelError(f"need {self.d} axis matrices, got {len(self.axis_matrices)}")
        for A in self.axis_matrices:
            if A.shape != (self.p, self.p):
                raise ModelError(f"axis matrix has shape {A.shape}, expected {(self.p, self.p)}")
        if self.b.shape != (self.p,) or self.c.shape != (self.p,):
            raise ModelError("b and c must be length-p vectors")
        if self.mode == CARMA and self.q is not None and not 0 <= self.q < self.p:
            raise ModelError("MA order q must satisfy 0 <= q < p")

    @classmethod
    def carma(cls, axis_polys: Sequence, b: Sequence[float], q: int | None = None) -> "ModelSpec":
        """CARMA(p, q) field from monic axis polynomials ``a_1, ..., a_d``.

        ``q`` defaults to the index of the last non-zero entry of ``b``.
        """
        polys = tuple(p if isinstance(p, Polynomial) else Polynomial(tuple(p)) for p in axis_polys)
        if not polys:
            raise ModelError("at least one axis polynomial is required")
        order = polys[0].degree
        if order < 1:
            raise ModelError("axis polynomials must have degree at least 1")
        for poly in polys:
            if not poly.is_monic:
                raise ModelError("axis polynomials must be monic")
            if poly.degree != order:
                raise ModelError("all axis polynomials must share the degree p")
        b = _frozen_array(b, 1)
        if q is None:
            nz = np.nonzero(b)[0]
            q = int(nz[-1]) if len(nz) else 0
        mats = tuple(_frozen_array(companion_matrix(poly), 2) for poly in polys)
        c = np.zeros(order)
        c[-1] = 1.0
        return cls(d=len(polys), p=order, mode=CARMA, b=b, c=_frozen_array(c, 1),
                   axis_matrices=mats, axis_polys=polys, q=q)

    @classmethod
    def gcarma(cls, axis_matrices: Sequence, b: Sequence[float], c: Sequence[float]) -> "ModelSpec":
        mats = tuple(_frozen_array(A, 2) for A in axis_matrices)
        if not mats:
            raise ModelError("at least one axis matrix is required")
        return cls(d=len(mats), p=mats[0].shape[0], mode=GCARMA, b=_frozen_array(b, 1),
                   c=_frozen_array(c, 1), axis_matrices=mats)

    @cached_property
    def characteristic_polys(self) -> tuple[Polynomial, ...]:
        if self.axis_polys is not None:
            return self.axis_polys
        return tuple(char_poly(A) for A in self.axis_matrices)

    @cached_property
    def spectra(self) -> tuple[Spectrum, ...]:
        """Per-axis eigenvalues with multiplicities (roots of the characteristic polynomials)."""
        return tuple(poly_roots(poly) for poly in self.characteristic_polys)

    @property
    def distinct_eigenvalues(self) -> bool:
        return all(s.is_distinct for s in self.spectra)

    @property
    def equal_axes(self) -> bool:
        A0 = self.axis_matrices[0]
        return all(np.array_equal(A, A0) for A in self.axis_matrices[1:])

    def commuting(self, tol: float = 1e-12) -> bool:
        mats = self.axis_matrices
        for i in range(len(mats)):
            for j in range(i + 1, len(mats)):
                scale = 1.0 + np.linalg.norm(mats[i]) * np.linalg.norm(mats[j])
                if np.linalg.norm(mats[i] @ mats[j] - mats[j] @ mats[i]) > tol * scale:
                    return False
        return True

    @property
    def slowest_decay(self) -> float:
        """Smallest ``|Re lambda|`` over all axes; the kernel decays at least this fast."""
        return min(s.min_abs_real for s in self.spectra)

    def b_poly(self) -> np.ndarray:
        """Coefficients of ``b(z)`` ordered from the highest power down, trailing zeros trimmed."""
        return np.trim_zeros(self.b[::-1], "f")

    def to_dict(self) -> dict:
        out = {"d": self.d, "p": self.p, "mode": self.mode, "b": self.b.tolist()}
        if self.mode == CARMA:
            out["q"] = self.q
            out["a"] = [list(poly.coeffs) for poly in self.axis_polys]
        else:
            out["c"] = self.c.tolist()
            out["A"] = [A.tolist() for A in self.axis_matrices]
        return out


# --- jump laws -----------------------------------------------------------------


@dataclass(frozen=True)
class ConstantJump:
    value: float

    def char(self, u):
        return np.exp(1j * u * self.value)

    @property
    def mean(self) -> float:
        return self.value

    @property
    def second_moment(self) -> float:
        return self.value ** 2

    def truncated_mean(self) -> float:
        return self.value if abs(self.value) <= 1 else 0.0

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.full(n, float(self.value))


@dataclass(frozen=True)
class GaussianJump:
    mean_: float
    std: float

    def __post_init__(self):
        if self.std <= 0:
            raise ModelError("Gaussian jump std must be positive")

    def char(self, u):
        return np.exp(1j * u * self.mean_ - 0.5 * (self.std * u) ** 2)

    @property
    def mean(self) -> float:
        return self.mean_

    @property
    def second_moment(self) -> float:
        return self.mean_ ** 2 + self.std ** 2

    def truncated_mean(self) -> float:
        lo, hi = (-1 - self.mean_) / self.std, (1 - self.mean_) / self.std
        mass = special.ndtr(hi) - special.ndtr(lo)
        pdf = lambda x: np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi)
        return float(self.mean_ * mass + self.std * (pdf(lo) - pdf(hi)))

    def sample(self, rng, n):
        return rng.normal(self.mean_, self.std, n)


@dataclass(frozen=True)
class LaplaceJump:
    """Two-sided exponential jump sizes with density exp(-|z - loc| / scale) / (2 scale)."""

    loc: float
    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ModelError("Laplace jump scale must be positive")

    def char(self, u):
        return np.exp(1j * u * self.loc) / (1.0 + (self.scale * u) ** 2)

    @property
    def mean(self) -> float:
        return self.loc

    @property
    def second_moment(self) -> float:
        return self.loc ** 2 + 2 * self.scale ** 2

    def truncated_mean(self) -> float:
        dens = lambda z: z * np.exp(-abs(z - self.loc) / self.scale) / (2 * self.scale)
        pts = [self.loc] if -1 < self.loc < 1 else None
        val, _ = integrate.quad(dens, -1.0, 1.0, points=pts, epsabs=1e-15, epsrel=1e-13)
        return float(val)

    def sample(self, rng, n):
        return rng.laplace(self.loc, self.scale, n)


JumpLaw = Union[ConstantJump, GaussianJump, LaplaceJump]


@dataclass(frozen=True)
class CompoundPoisson:
    rate: float
    law: JumpLaw

    def __post_init__(self):
        if self.rate <= 0:
            raise ModelError("compound Poisson rate must be positive")


@dataclass(frozen=True)
class SymmetricStable:
    """Symmetric alpha-stable jumps with cumulant ``-eta |u|**alpha`` per unit volume."""

    alpha: float
    eta: float

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise ModelError("stability index must lie in (0, 2]")
        if self.eta <= 0:
            raise ModelError("stable scale eta must be positive")


@dataclass(frozen=True)
class LevyBasisSpec:
    """Characteristics of a homogeneous Levy basis.

    ``beta`` is the drift and ``sigma2`` the Gaussian variance per unit volume.
    For compound Poisson jumps the small-jump compensator is folded into the
    drift, i.e. the cumulant function carries ``-i u rate E[J; |J| <= 1]``.
    """

    beta: float = 0.0
    sigma2: float = 0.0
    jumps: CompoundPoisson | SymmetricStable | None = None

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ModelError("sigma2 must be non-negative")

    @classmethod
    def gaussian(cls, sigma2: float = 1.0, beta: float = 0.0) -> "LevyBasisSpec":
        return cls(beta=beta, sigma2=sigma2)

    @classmethod
    def stable(cls, alpha: float, eta: float = 1.0, beta: float = 0.0) -> "LevyBasisSpec":
        return cls(beta=beta, jumps=SymmetricStable(alpha, eta))

    @classmethod
    def compound_poisson(cls, rate: float, law: JumpLaw, beta: float = 0.0,
                         sigma2: float = 0.0) -> "LevyBasisSpec":
        return cls(beta=beta, sigma2=sigma2, jumps=CompoundPoisson(rate, law))

    @property
    def is_gaussian(self) -> bool:
        return self.jumps is None

    @property
    def is_stable(self) -> bool:
        return isinstance(self.jumps, SymmetricStable)

    @property
    def kappa1(self) -> float | None:
        """Mean per unit volume, ``beta + int_{|z|>1} z nu(dz)``; None if it does not exist."""
        j = self.jumps
        if j is None:
            return self.beta
        if isinstance(j, SymmetricStable):
            return self.beta if j.alpha > 1 else None
        return self.beta + j.rate * (j.law.mean - j.law.truncated_mean())

    @property
    def kappa2(self) -> float | None:
        """Variance per unit volume, ``sigma2 + int z**2 nu(dz)``; None if infinite."""
        j = self.jumps
        if j is None:
            return self.sigma2
        if isinstance(j, SymmetricStable):
            return self.sigma2 + 2 * j.eta if j.alpha == 2 else None
        return self.sigma2 + j.rate * j.law.second_moment

    @property
    def compensated_drift(self) -> float:
        """Drift actually added to a cell increment once small jumps are compensated."""
        j = self.jumps
        if isinstance(j, CompoundPoisson):
            return self.beta - j.rate * j.law.truncated_mean()
        return self.beta

    @property
    def growth_order(self) -> float:
        """Power ``r`` with ``|zeta(x)| = O(|x|**r)`` as ``x -> 0``; sets quadrature decay rates."""
        orders = []
        if self.beta != 0:
            orders.append(1.0)
        if self.sigma2 > 0:
            orders.append(2.0)
        if isinstance(self.jumps, CompoundPoisson):
            orders.append(1.0)
        elif isinstance(self.jumps, SymmetricStable):
            orders.append(self.jumps.alpha)
        return min(orders, default=2.0)

    @property
    def log_moment_finite(self) -> bool:
        # every supported jump family has a finite log-moment of any power
        return True

    def to_dict(self) -> dict:
        out: dict = {"beta": self.beta, "sigma2": self.sigma2}
        j = self.jumps
        if j is None:
            out["type"] = "gaussian"
        elif isinstance(j, SymmetricStable):
            out.update(type="stable", alpha=j.alpha, eta=j.eta)
        else:
            law = j.law
            if isinstance(law, ConstantJump):
                jd = {"law": "constant", "value": law.value}
            elif isinstance(law, GaussianJump):
                jd = {"law": "gaussian", "mean": law.mean_, "std": law.std}
            else:
                jd = {"law": "laplace", "loc": law.loc, "scale": law.scale}
            out.update(type="compound_poisson", rate=j.rate, jump=jd)
        return out


def cumulant_function(levy: LevyBasisSpec, u):
    """Levy symbol ``zeta(u)`` of the basis; vectorised over ``u``."""
    u = np.asarray(u, dtype=float)
    out = 1j * u * levy.beta - 0.5 * u * u * levy.sigma2
    j = levy.jumps
    if isinstance(j, CompoundPoisson):
        out = out + j.rate * (j.law.char(u) - 1.0) - 1j * u * j.rate * j.law.truncated_mean()
    elif isinstance(j, SymmetricStable):
        out = out - j.eta * np.abs(u) ** j.alpha
    elif j is not None:
        raise ModelError(f"no closed-form characteristic function for {type(j).__name__}")
    return out


# --- validation ----------------------------------------------------------------


@dataclass
class ValidationReport:
    """Outcome of :func:`validate_model`.

    ``valid`` depends only on the existence conditions (structure,
    stationarity, log-moment).  The remaining flags describe which
    computational routes apply and never invalidate a model on their own.
    """

    structure: bool
    stationary: bool
    log_moment: bool
    distinct_eigenvalues: list[bool]
    common_roots: bool | None
    companion: bool
    commuting: bool
    messages: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return self.structure and self.stationary and self.log_moment

    def failures(self) -> list[str]:
        pairs = (("structure", self.structure), ("stationarity", self.stationary),
                 ("log_moment", self.log_moment))
        return [name for name, ok in pairs if not ok]

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "flags": {
                "structure": self.structure,
                "stationarity": self.stationary,
                "log_moment": self.log_moment,
                "distinct_eigenvalues": self.distinct_eigenvalues,
                "common_roots": self.common_roots,
                "companion": self.companion,
                "commuting": self.commuting,
            },
            "failures": self.failures(),
            "messages": list(self.messages),
        }


def _shares_root(b_coeffs: np.ndarray, spectrum: Spectrum) -> bool:
    if len(b_coeffs) < 2:
        return False
    scale = np.polyval(np.abs(b_coeffs), np.abs(spectrum.values))
    return bool(np.any(np.abs(np.polyval(b_coeffs, spectrum.values)) <= 1e3 * CLUSTER_RADIUS * scale))


def validate_model(spec: ModelSpec, levy: LevyBasisSpec | None = None) -> ValidationReport:
    messages = []
    structure = True
    if spec.mode == CARMA:
        nz = np.nonzero(spec.b)[0]
        if spec.q is None or len(nz) == 0 or spec.b[spec.q] == 0 or nz[-1] > spec.q:
            structure = False
            messages.append(f"b must satisfy b_q != 0 and b_i = 0 for i > q (q={spec.q})")

    spectra = spec.spectra
    stationary = all(s.max_real < 0 for s in spectra)
    if not stationary:
        for i, s in enumerate(spectra, 1):
            if s.max_real >= 0:
                messages.append(f"axis {i} has an eigenvalue with real part {s.max_real:g} >= 0")
    distinct = [s.is_distinct for s in spectra]

    common = None
    if spec.mode == CARMA:
        common = _shares_root(spec.b_poly(), spectra[0])
        if common:
            messages.append("b(z) and a_1(z) share a root")

    log_moment = True if levy is None else levy.log_moment_finite
    companion = spec.mode == CARMA or all(
        np.allclose(A, companion_matrix(char_poly(A))) for A in spec.axis_matrices)
    if not companion:
        messages.append("axis matrices are not in companion form (GCARMA only)")
    return ValidationReport(structure, stationary, log_moment, distinct, common, companion,
                            spec.commuting(), messages)
