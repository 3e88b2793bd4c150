"""The CARMA kernel ``g(s) = b' e^{A_1 s_1} ... e^{A_d s_d} c 1{s >= 0}``.

Three routes are provided:

* :func:`kernel_direct` multiplies matrix exponentials and works for any
  valid spec, including Jordan blocks;
* :func:`kernel_coefficients` expands ``g`` as a finite sum of products of
  exponentials, one term per tuple of axis eigenvalues;
* :func:`kernel_equal_matrices` covers identical axis matrices, where ``g``
  depends on ``s`` only through ``s_1 + ... + s_d`` and repeated roots are
  handled by a residue at each eigenvalue.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial
from typing import Sequence

import numpy as np

from .algebra import Polynomial, mat_exp
from .errors import ImaginaryResidueError, ModelError, RepeatedEigenvalueError
from .model import CARMA, ModelSpec

IMAG_TOL = 1e-10


def real_part(values, tol: float = IMAG_TOL, what: str = "kernel value"):
    """Return ``values.real`` after checking that the imaginary part is negligible."""
    values = np.asarray(values)
    if np.iscomplexobj(values):
        bad = np.abs(values.imag) > tol * (1.0 + np.abs(values.real))
        if np.any(bad):
            worst = np.max(np.abs(values.imag[bad]))
            raise ImaginaryResidueError(f"{what} has imaginary part {worst:.3e}")
        return values.real
    return values


def _as_points(spec: ModelSpec, s) -> tuple[np.ndarray, bool]:
    pts = np.asarray(s, dtype=float)
    scalar = pts.ndim <= 1
    if spec.d == 1 and pts.ndim <= 1:
        scalar = pts.ndim == 0
        pts = pts.reshape(-1, 1)
    else:
        pts = np.atleast_2d(pts)
    if pts.shape[-1] != spec.d:
        raise ModelError(f"points must have {spec.d} coordinates, got shape {pts.shape}")
    return pts, scalar


def _squeeze(values: np.ndarray, scalar: bool):
    return float(values[0]) if scalar else values


# --- direct route ----------------------------------------------------------------


def kernel_direct(spec: ModelSpec, s):
    """Evaluate ``g`` at one point (shape ``(d,)``) or many (shape ``(n, d)``)."""
    pts, scalar = _as_points(spec, s)
    causal = np.all(pts >= 0, axis=1)
    v = np.broadcast_to(spec.c, (len(pts), spec.p)).copy()
    for k in range(spec.d - 1, -1, -1):
        E = mat_exp(spec.axis_matrices[k], np.where(causal, pts[:, k], 0.0))
        v = np.einsum("nij,nj->ni", E, v)
    out = np.where(causal, v @ spec.b, 0.0)
    return _squeeze(out, scalar)


def kernel_direct_grid(spec: ModelSpec, axes: Sequence[np.ndarray]) -> np.ndarray:
    """Evaluate ``g`` on the tensor grid ``axes[0] x ... x axes[d-1]``.

    Each axis needs only one batch of matrix exponentials, so the cost is
    linear in the number of grid points per axis plus one contraction.
    """
    axes = [np.asarray(x, dtype=float).ravel() for x in axes]
    if len(axes) != spec.d:
        raise ModelError(f"need {spec.d} axes")
    exps = [mat_exp(A, np.maximum(x, 0.0)) * (x >= 0)[:, None, None]
            for A, x in zip(spec.axis_matrices, axes)]
    # contract from the right: T[..., n_k, :] = E_k(x) T
    T = np.einsum("nij,j->ni", exps[-1], spec.c)
    for E in reversed(exps[:-1]):
        T = np.einsum("nij,...j->n...i", E, T)
    return T @ spec.b


# --- coefficient route -----------------------------------------------------------


def truncated_poly(a: Polynomial, k: int) -> Polynomial:
    """Keep the leading ``p - k + 1`` coefficients of ``a``: ``a_k(z) = sum_{l<=p-k} alpha_l z^{p-k-l}``."""
    p = a.degree
    if not 1 <= k <= p:
        raise ModelError(f"truncation index must satisfy 1 <= k <= {p}, got {k}")
    return Polynomial(a.coeffs[: p - k + 1])


@dataclass(frozen=True, eq=False)
class KernelCoefficients:
    """``g(s) = sum_I weights[I] * prod_k exp(exponents[k][i_k] * s_k)`` on the closed orthant.

    ``weights`` is a complex tensor of shape ``(p_1, ..., p_d)`` indexed by
    the per-axis eigenvalues in ``exponents``.
    """

    exponents: tuple[np.ndarray, ...]
    weights: np.ndarray

    @property
    def d(self) -> int:
        return len(self.exponents)

    def terms(self, tol: float = 0.0) -> list[tuple[tuple[complex, ...], complex]]:
        out = []
        for idx in np.ndindex(self.weights.shape):
            w = self.weights[idx]
            if abs(w) > tol:
                out.append((tuple(self.exponents[k][i] for k, i in enumerate(idx)), complex(w)))
        return out

    def evaluate(self, s):
        pts = np.asarray(s, dtype=float)
        scalar = pts.ndim == 0 or (pts.ndim == 1 and self.d > 1)
        pts = pts.reshape(-1, self.d)
        causal = np.all(pts >= 0, axis=1)
        acc = self.weights[None, ...]
        for k in range(self.d - 1, -1, -1):
            e = np.exp(np.outer(pts[:, k], self.exponents[k]))
            acc = np.einsum("n...i,ni->n...", acc, e)
        out = np.where(causal, real_part(acc), 0.0)
        return float(out[0]) if scalar else out

    def evaluate_grid(self, axes: Sequence[np.ndarray]) -> np.ndarray:
        T = self.weights
        for k, x in enumerate(axes):
            x = np.asarray(x, dtype=float).ravel()
            e = np.exp(np.outer(x, self.exponents[k])) * (x >= 0)[:, None]
            T = np.tensordot(T, e, axes=([0], [1]))  # consumed axis moves to the end
        return real_part(T)

    def integral(self) -> float:
        """``int_{R_+^d} g(s) ds``."""
        T = self.weights
        for lam in self.exponents:
            T = np.tensordot(T, -1.0 / lam, axes=([0], [0]))
        return float(real_part(T, what="kernel integral"))

    def is_conjugate_symmetric(self, tol: float = 1e-9) -> bool:
        """Conjugating every exponent tuple conjugates the weight."""
        perms = []
        for lam in self.exponents:
            dist = np.abs(lam[:, None] - np.conj(lam)[None, :])
            perms.append(np.argmin(dist, axis=1))
        flipped = self.weights[np.ix_(*perms)]
        scale = 1.0 + np.max(np.abs(self.weights))
        return bool(np.max(np.abs(flipped - np.conj(self.weights))) <= tol * scale)


def _require_distinct(spec: ModelSpec):
    for k, s in enumerate(spec.spectra, 1):
        if not s.is_distinct:
            raise RepeatedEigenvalueError(
                f"axis {k} has repeated eigenvalues; use the direct kernel route")


def _carma_weights(spec: ModelSpec) -> np.ndarray:
    p, d = spec.p, spec.d
    kk = np.arange(p)
    factors = []
    for i, (poly, spec_i) in enumerate(zip(spec.axis_polys, spec.spectra)):
        lam = spec_i.values
        dpoly = np.polyder(poly.array)
        powers = lam[None, :] ** kk[:, None] / np.polyval(dpoly, lam)[None, :]  # (k_i, lambda)
        if i < d - 1:
            trunc = np.array([np.polyval(truncated_poly(poly, k + 1).array, lam)
                              for k in range(p)])  # (k_{i+1}, lambda)
            factors.append(powers[:, None, :] * trunc[None, :, :])  # (k_i, k_{i+1}, lambda)
        else:
            factors.append(powers)
    # contract b with the chain of factors, collecting one eigenvalue axis per step
    T = spec.b.astype(complex)  # (k_1,)
    for i, F in enumerate(factors):
        if i < d - 1:
            T = np.einsum("...k,kjl->...lj", T, F)
        else:
            T = np.einsum("...k,kl->...l", T, F)
    return T


def _spectral_projectors(A: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Frobenius covariants ``P_j = prod_{m != j} (A - lam_m) / (lam_j - lam_m)`` for distinct eigenvalues."""
    p = len(lam)
    eye = np.eye(p)
    out = np.empty((p, p, p), dtype=complex)
    for j in range(p):
        P = eye.astype(complex)
        for m in range(p):
            if m != j:
                P = P @ (A - lam[m] * eye) / (lam[j] - lam[m])
        out[j] = P
    return out


def _gcarma_weights(spec: ModelSpec) -> np.ndarray:
    projs = [_spectral_projectors(A, s.values) for A, s in zip(spec.axis_matrices, spec.spectra)]
    T = np.einsum("i,lij->lj", spec.b.astype(complex), projs[0])
    for P in projs[1:]:
        T = np.einsum("...i,lij->...lj", T, P)
    return T @ spec.c


@lru_cache(maxsize=64)
def _cached_coefficients(spec: ModelSpec) -> KernelCoefficients:
    _require_distinct(spec)
    weights = _carma_weights(spec) if spec.mode == CARMA else _gcarma_weights(spec)
    weights.setflags(write=False)
    return KernelCoefficients(tuple(s.values for s in spec.spectra), weights)


def kernel_coefficients(spec: ModelSpec) -> KernelCoefficients:
    """Exponential-sum expansion of ``g``; requires distinct eigenvalues on every axis."""
    return _cached_coefficients(spec)


def has_coefficients(spec: ModelSpec) -> bool:
    return spec.distinct_eigenvalues


def kernel(spec: ModelSpec, s):
    """Default evaluator: coefficient route when available, direct route otherwise."""
    if has_coefficients(spec):
        return kernel_coefficients(spec).evaluate(s)
    return kernel_direct(spec, s)


# --- equal-matrices route --------------------------------------------------------


def _series_mul(x: np.ndarray, y: np.ndarray, n: int) -> np.ndarray:
    """Truncated product of power series along the last axis (length ``n``)."""
    out = np.zeros(np.broadcast_shapes(x.shape, y.shape), dtype=complex)
    for k in range(n):
        out[..., k] = np.sum(x[..., : k + 1] * y[..., k::-1], axis=-1)
    return out


def _poly_taylor(coeffs_high_first: np.ndarray, z0: complex, n: int) -> np.ndarray:
    """Taylor coefficients of a polynomial at ``z0`` up to order ``n - 1``."""
    c = np.asarray(coeffs_high_first, dtype=complex)[::-1]  # lowest power first
    out = np.zeros(n, dtype=complex)
    for k in range(min(n, len(c))):
        out[k] = sum(comb(j, k) * c[j] * z0 ** (j - k) for j in range(k, len(c)))
    return out


def kernel_equal_matrices(spec: ModelSpec, s):
    """Kernel for ``A_1 = ... = A_d`` via residues of ``e^{z(s_1+...+s_d)} b(z)/a(z)``.

    Repeated roots of multiplicity ``mu`` contribute
    ``(1/(mu-1)!) d^{mu-1}/dz^{mu-1} [(z - lam)^mu e^{z sigma} b(z)/a(z)]`` at ``z = lam``.
    """
    if spec.mode != CARMA:
        raise ModelError("the equal-matrices route needs a CARMA spec")
    if any(poly != spec.axis_polys[0] for poly in spec.axis_polys[1:]):
        raise ModelError("the equal-matrices route needs identical axis polynomials")
    spectrum = spec.spectra[0]
    # a root shared by b and a just contributes a zero residue, so no coprimality check
    b_high = spec.b[::-1]

    pts, scalar = _as_points(spec, s)
    causal = np.all(pts >= 0, axis=1)
    sigma = np.where(causal, pts.sum(axis=1), 0.0)
    total = np.zeros(len(pts), dtype=complex)
    for lam, mu in zip(spectrum.values, spectrum.multiplicities):
        n = int(mu)
        series = _poly_taylor(b_high, lam, n)
        for nu, m in zip(spectrum.values, spectrum.multiplicities):
            if nu is lam or nu == lam:
                continue
            # 1/(lam - nu + w) = sum_k (-1)^k w^k / (lam - nu)^(k+1)
            inv = np.array([(-1) ** k / (lam - nu) ** (k + 1) for k in range(n)])
            for _ in range(int(m)):
                series = _series_mul(series, inv, n)
        expo = np.exp(lam * sigma)[:, None] * (sigma[:, None] ** np.arange(n)) / np.array(
            [factorial(k) for k in range(n)])
        total += _series_mul(expo, series[None, :], n)[:, n - 1]
    out = np.where(causal, real_part(total), 0.0)
    return _squeeze(out, scalar)


def kernel_grid(spec: ModelSpec, axes: Sequence[np.ndarray]) -> np.ndarray:
    """Default tensor-grid evaluator (coefficient route when available)."""
    if has_coefficients(spec):
        return kernel_coefficients(spec).evaluate_grid(axes)
    return kernel_direct_grid(spec, axes)
