"""Discrete ARMA structure of a GCARMA field sampled on the unit lattice of R^2.

For commuting ``A_1, A_2`` the sampled field satisfies

    sum_{0<=k<=p} d_k Y_{t-k} = sum_{0<=k<=p-1} Theta_k R_{t-k}

with scalar AR coefficients ``d_k`` from the characteristic polynomials of
``e^{A_1}`` and ``e^{A_2}``, row vectors ``Theta_k`` and i.i.d. vector noise
``R_t`` (the state response to the noise in the unit cell ending at ``t``).
The right-hand side ``U_t`` is ``(p-1, p-1)``-dependent; its autocovariance
is ``gamma_hat(h) = sum_k Theta_{k+h} Sigma_R Theta_k'``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .algebra import mat_exp, poly_from_roots
from .errors import ModelError, QuadratureError
from .kernel import _spectral_projectors, real_part
from .model import LevyBasisSpec, ModelSpec
from .moments import _kappa2

SIGMA_R_NODES = 40


def _require_plane(spec: ModelSpec):
    if spec.d != 2:
        raise ModelError("lattice ARMA analysis is formulated on the plane (d = 2)")
    if not spec.commuting(1e-12):
        raise ModelError("lattice ARMA representation requires commuting axis matrices A1 A2 = A2 A1")


def ar_coefficients(spec: ModelSpec) -> np.ndarray:
    """Table ``d[k1, k2]``, ``0 <= k_i <= p``, with ``d[k1, k2] = d[k1, 0] d[0, k2]``."""
    _require_plane(spec)
    axes = []
    for s in spec.spectra:
        chi = poly_from_roots(np.exp(s.with_multiplicity()))
        axes.append(real_part(chi, tol=1e-12, what="AR coefficient"))
    return np.outer(axes[0], axes[1])


def noise_covariance(spec: ModelSpec, levy: LevyBasisSpec, nodes: int = SIGMA_R_NODES,
                     tol: float = 1e-9) -> np.ndarray:
    """``Sigma_R = kappa2 int_[0,1]^2 e^{A_1 u + A_2 v} c c' (...)' du dv`` by tensor Gauss-Legendre.

    The rule is checked against one with twice the nodes.
    """
    k2 = _kappa2(levy)

    def rule(n):
        x, w = np.polynomial.legendre.leggauss(n)
        x, w = 0.5 * (x + 1), 0.5 * w
        V = np.einsum("vij,j->vi", mat_exp(spec.axis_matrices[1], x), spec.c)
        H = np.einsum("uij,vj->uvi", mat_exp(spec.axis_matrices[0], x), V)
        return k2 * np.einsum("u,v,uvi,uvj->ij", w, w, H, H)

    coarse, fine = rule(nodes), rule(2 * nodes)
    if np.max(np.abs(coarse - fine)) > tol * (1 + np.max(np.abs(fine))):
        raise QuadratureError("Sigma_R quadrature did not settle between refinement levels")
    return fine


def noise_covariance_closed(spec: ModelSpec, levy: LevyBasisSpec) -> np.ndarray:
    """Closed form of ``Sigma_R`` through spectral projectors; distinct eigenvalues only."""
    k2 = _kappa2(levy)
    if not spec.distinct_eigenvalues:
        raise ModelError("closed-form Sigma_R needs distinct eigenvalues on both axes")
    lam, mu = (s.values for s in spec.spectra)
    P1 = _spectral_projectors(spec.axis_matrices[0], lam)
    P2 = _spectral_projectors(spec.axis_matrices[1], mu)
    vec = np.einsum("iab,jbc,c->ija", P1, P2, spec.c)  # (lam, mu, p)

    def phi(x):  # int_0^1 e^{x u} du
        return np.where(np.abs(x) < 1e-12, 1.0, np.expm1(x) / np.where(x == 0, 1, x))

    F1 = phi(lam[:, None] + lam[None, :])
    F2 = phi(mu[:, None] + mu[None, :])
    S = k2 * np.einsum("ija,klb,ik,jl->ab", vec, vec, F1, F2)
    return real_part(S, what="Sigma_R")


def noise_weights(spec: ModelSpec, levy: LevyBasisSpec | None = None):
    """``Theta[k1, k2] = sum_{l <= k} d_l b' e^{(k1 - l1) A_1 + (k2 - l2) A_2}`` for ``0 <= k_i <= p - 1``.

    Returns ``(Theta, Sigma_R)`` with ``Theta`` of shape ``(p, p, p)``;
    ``Sigma_R`` is None when ``levy`` is omitted.
    """
    d = ar_coefficients(spec)
    p = spec.p
    E1 = mat_exp(spec.axis_matrices[0], np.arange(p, dtype=float))
    E2 = mat_exp(spec.axis_matrices[1], np.arange(p, dtype=float))
    # B[m1, m2] = b' e^{m1 A_1} e^{m2 A_2}
    B = np.einsum("i,aij,bjk->abk", spec.b, E1, E2)
    theta = np.zeros((p, p, p))
    for k1 in range(p):
        for k2 in range(p):
            for l1 in range(k1 + 1):
                for l2 in range(k2 + 1):
                    theta[k1, k2] += d[l1, l2] * B[k1 - l1, k2 - l2]
    sigma = None if levy is None else noise_covariance(spec, levy)
    return theta, sigma


def acov_from_ma(theta: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Autocovariance of ``U_t = sum_k Theta_k R_{t-k}`` on lags ``|h_i| <= q``, ``q = theta.shape[0] - 1``.

    Entry ``[h1 + q, h2 + q]`` holds ``gamma(h) = sum_k Theta_{k+h} Sigma Theta_k'``.
    """
    q = theta.shape[0] - 1
    out = np.zeros((2 * q + 1, 2 * q + 1))
    for h1 in range(-q, q + 1):
        for h2 in range(-q, q + 1):
            acc = 0.0
            for k1 in range(max(0, -h1), min(q, q - h1) + 1):
                for k2 in range(max(0, -h2), min(q, q - h2) + 1):
                    acc += theta[k1 + h1, k2 + h2] @ sigma @ theta[k1, k2]
            out[h1 + q, h2 + q] = acc
    return 0.5 * (out + out[::-1, ::-1])


def rhs_autocovariance(spec: ModelSpec, levy: LevyBasisSpec) -> np.ndarray:
    theta, sigma = noise_weights(spec, levy)
    return acov_from_ma(theta, sigma)


def acov_table_to_dict(table: np.ndarray) -> dict[str, float]:
    q = table.shape[0] // 2
    return {f"{h1},{h2}": float(table[h1 + q, h2 + q])
            for h1 in range(-q, q + 1) for h2 in range(-q, q + 1)}


def acov_table_from_dict(data: dict[str, float]) -> np.ndarray:
    lags = [tuple(int(x) for x in key.split(",")) for key in data]
    q = max(max(abs(a), abs(b)) for a, b in lags)
    out = np.zeros((2 * q + 1, 2 * q + 1))
    for (h1, h2), v in zip(lags, data.values()):
        out[h1 + q, h2 + q] = v
    return out


@dataclass
class ArmaRepresentation:
    ar_coeffs: np.ndarray
    noise_weights: np.ndarray
    noise_cov: np.ndarray
    rhs_acov: np.ndarray

    @property
    def p(self) -> int:
        return self.ar_coeffs.shape[0] - 1

    def to_dict(self) -> dict:
        p = self.p
        return {
            "p": p,
            "ar_coeffs": {f"{k1},{k2}": float(self.ar_coeffs[k1, k2])
                          for k1 in range(p + 1) for k2 in range(p + 1)},
            "noise_weights": {f"{k1},{k2}": self.noise_weights[k1, k2].tolist()
                              for k1 in range(p) for k2 in range(p)},
            "noise_cov": self.noise_cov.tolist(),
            "rhs_acov": acov_table_to_dict(self.rhs_acov),
        }


def arma_representation(spec: ModelSpec, levy: LevyBasisSpec) -> ArmaRepresentation:
    theta, sigma = noise_weights(spec, levy)
    return ArmaRepresentation(ar_coefficients(spec), theta, sigma, acov_from_ma(theta, sigma))


# --- MA(1,1) matching ------------------------------------------------------------

MA_LAGS = ((0, 0), (1, 0), (0, 1), (1, 1), (1, -1))


def ma11_acov(theta) -> np.ndarray:
    """``(gamma(0,0), gamma(1,0), gamma(0,1), gamma(1,1), gamma(1,-1))`` of ``sum theta_k Z_{t-k}``.

    ``theta`` is ordered ``(theta_00, theta_10, theta_01, theta_11)``; leading axes broadcast.
    """
    t = np.asarray(theta, dtype=float)
    a, b, c, e = t[..., 0], t[..., 1], t[..., 2], t[..., 3]
    return np.stack([a * a + b * b + c * c + e * e, a * b + c * e, b * e + a * c, a * e, c * b], axis=-1)


def _ma11_jacobian(t: np.ndarray) -> np.ndarray:
    a, b, c, e = t[..., 0], t[..., 1], t[..., 2], t[..., 3]
    z = np.zeros_like(a)
    rows = [
        [2 * a, 2 * b, 2 * c, 2 * e],
        [b, a, e, c],
        [c, e, a, b],
        [e, z, z, a],
        [z, c, b, z],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


@dataclass
class MaMatch:
    solutions: list[tuple[float, float, float, float]]
    status: str
    best_residual: float
    starts: int
    tolerance: float = 1e-10

    def to_dict(self) -> dict:
        return {"status": self.status, "solutions": [list(s) for s in self.solutions],
                "best_residual": self.best_residual, "starts": self.starts,
                "tolerance": self.tolerance}


def _target_vector(gamma_hat) -> np.ndarray:
    if isinstance(gamma_hat, dict):
        gamma_hat = acov_table_from_dict(gamma_hat)
    g = np.asarray(gamma_hat, dtype=float)
    if g.ndim == 1 and g.shape == (5,):
        return g
    if g.shape != (3, 3):
        raise ModelError("MA(1,1) matching needs a p = 2 autocovariance table (lags |h_i| <= 1)")
    return np.array([g[1 + h1, 1 + h2] for h1, h2 in MA_LAGS])


def ma_match(gamma_hat, starts: int = 2 ** 14, seed: int = 0, tol: float = 1e-10,
             dedup: float = 1e-6, iterations: int = 400) -> MaMatch:
    """All real MA(1,1) coefficient tuples reproducing ``gamma_hat`` on the five independent lags.

    Levenberg-Marquardt from scrambled Sobol starts in ``[-sqrt(g00), sqrt(g00)]^4``;
    a start counts as a solution when its max-abs residual is at most ``tol``.
    """
    target = _target_vector(gamma_hat)
    if target[0] <= 0:
        return MaMatch([], "no_real_solution", float("inf"), 0, tol)
    radius = np.sqrt(target[0])
    sobol = qmc.Sobol(4, scramble=True, seed=seed)
    m = int(np.ceil(np.log2(max(starts, 2))))
    x = (2 * sobol.random_base2(m)[:starts] - 1) * radius

    mu = np.full(len(x), 1e-3 * target[0])
    eye = np.eye(4)
    r = ma11_acov(x) - target
    cost = np.sum(r * r, axis=1)
    for _ in range(iterations):
        J = _ma11_jacobian(x)
        JtJ = np.einsum("nki,nkj->nij", J, J)
        g = np.einsum("nki,nk->ni", J, r)
        step = np.linalg.solve(JtJ + mu[:, None, None] * eye, -g[..., None])[..., 0]
        x_new = x + step
        r_new = ma11_acov(x_new) - target
        cost_new = np.sum(r_new * r_new, axis=1)
        better = cost_new < cost
        x = np.where(better[:, None], x_new, x)
        r = np.where(better[:, None], r_new, r)
        cost = np.where(better, cost_new, cost)
        mu = np.where(better, mu * 0.3, mu * 4.0)
        mu = np.clip(mu, 1e-15, 1e12)
        if np.all(np.max(np.abs(r), axis=1)[better | (mu >= 1e12)] <= 0.1 * tol):
            break

    resid = np.max(np.abs(r), axis=1)
    best = float(resid.min())
    found = x[resid <= tol]
    solutions: list[np.ndarray] = []
    for cand in found[np.argsort(resid[resid <= tol])]:
        if all(np.max(np.abs(cand - s)) > dedup for s in solutions):
            solutions.append(cand)
    solutions.sort(key=lambda s: tuple(-s))
    status = "matched" if solutions else "no_real_solution"
    return MaMatch([tuple(float(v) for v in s) for s in solutions], status, best, len(x), tol)


# --- spectral check --------------------------------------------------------------


def discrete_spectral_check(gamma_hat, n: int = 256, rel_tol: float = 1e-12) -> dict:
    """Evaluate ``f(w) = (2 pi)^-2 sum_h gamma_hat(h) cos(w . h)`` on an ``n x n`` grid over ``[-pi, pi]^2``.

    ``log_integrable`` is the sufficient criterion ``min f > 0``, with zero
    understood up to ``rel_tol`` times the largest value of ``|f|``.
    """
    if isinstance(gamma_hat, dict):
        gamma_hat = acov_table_from_dict(gamma_hat)
    g = np.asarray(gamma_hat, dtype=float)
    q = g.shape[0] // 2
    w = np.linspace(-np.pi, np.pi, n)
    h = np.arange(-q, q + 1)
    C = np.cos(np.outer(w, h))
    S = np.sin(np.outer(w, h))
    # cos(w1 h1 + w2 h2) = cos cos - sin sin
    f = (C @ g @ C.T - S @ g @ S.T) / (2 * np.pi) ** 2
    min_f = float(f.min())
    scale = float(np.max(np.abs(f)))
    i, j = np.unravel_index(np.argmin(f), f.shape)
    return {"min_f": min_f, "argmin": [float(w[i]), float(w[j])],
            "log_integrable": bool(min_f > rel_tol * scale)}


# --- empirical verification -----------------------------------------------------


@dataclass
class ArmaResidualReport:
    lags: list[tuple[int, int]]
    empirical: np.ndarray
    expected: np.ndarray
    standard_error: np.ndarray
    correlations: np.ndarray
    n_points: int
    notes: list[str] = field(default_factory=list)

    @property
    def z_scores(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (self.empirical - self.expected) / self.standard_error
        return np.where(self.standard_error > 0, z, 0.0)

    def correlation(self, h) -> float:
        return float(self.correlations[self.lags.index(tuple(h))])

    def to_dict(self) -> dict:
        return {
            "n_points": self.n_points,
            "lags": [f"{a},{b}" for a, b in self.lags],
            "empirical": self.empirical.tolist(),
            "expected": self.expected.tolist(),
            "standard_error": self.standard_error.tolist(),
            "correlations": self.correlations.tolist(),
        }


def arma_residuals(values: np.ndarray, ar: np.ndarray) -> np.ndarray:
    """``V_t = sum_k d_k Y_{t-k}`` wherever the whole stencil lies in the array."""
    Y = np.asarray(values, dtype=float)
    p = ar.shape[0] - 1
    n1, n2 = Y.shape
    if n1 <= p or n2 <= p:
        raise ModelError("field too small for the AR stencil")
    V = np.zeros((n1 - p, n2 - p))
    for k1 in range(p + 1):
        for k2 in range(p + 1):
            V += ar[k1, k2] * Y[p - k1:n1 - k1, p - k2:n2 - k2]
    return V


def _lag_products(V: np.ndarray, h1: int, h2: int) -> np.ndarray:
    n1, n2 = V.shape
    a = V[max(0, -h1):n1 - max(0, h1), max(0, -h2):n2 - max(0, h2)]
    b = V[max(0, h1):n1 - max(0, -h1), max(0, h2):n2 - max(0, -h2)]
    return a * b


def verify_arma_recursion(fields, rep: ArmaRepresentation, max_lag: int | None = None,
                          centre: bool = True) -> ArmaResidualReport:
    """Empirical autocovariance of ``V_t = sum_k d_k Y_{t-k}`` against ``gamma_hat``.

    ``fields`` is one :class:`~carma_fields.simulate.LatticeField` or a
    sequence of them (pooled).  Standard errors use Bartlett's formula with
    ``gamma_hat`` as the true autocovariance.
    """
    if not isinstance(fields, (list, tuple)):
        fields = [fields]
    p = rep.p
    L = p if max_lag is None else max_lag
    lags = [(h1, h2) for h1 in range(-L, L + 1) for h2 in range(-L, L + 1)]
    sums = np.zeros(len(lags))
    counts = np.zeros(len(lags))
    n_points = 0
    for fld in fields:
        if any(abs(h - 1.0) > 1e-12 for h in fld.grid.spacing):
            raise ModelError("ARMA verification needs a field sampled at unit spacing")
        V = arma_residuals(fld.values, rep.ar_coeffs)
        if centre:
            V = V - V.mean()
        n_points += V.size
        for i, (h1, h2) in enumerate(lags):
            prod = _lag_products(V, h1, h2)
            sums[i] += prod.sum()
            counts[i] += prod.size
    empirical = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)

    q = rep.rhs_acov.shape[0] // 2

    def gamma(h1, h2):
        if abs(h1) > q or abs(h2) > q:
            return 0.0
        return float(rep.rhs_acov[h1 + q, h2 + q])

    expected = np.array([gamma(*h) for h in lags])
    support = [(a, b) for a in range(-q, q + 1) for b in range(-q, q + 1)]
    se = np.empty(len(lags))
    for i, (h1, h2) in enumerate(lags):
        v = sum(gamma(a, b) ** 2 + gamma(a + h1, b + h2) * gamma(a - h1, b - h2) for a, b in support)
        se[i] = np.sqrt(max(v, 0.0) / max(counts[i], 1))
    zero = lags.index((0, 0))
    c0 = empirical[zero]
    correlations = empirical / c0 if c0 > 0 else np.zeros_like(empirical)
    return ArmaResidualReport(lags, empirical, expected, se, correlations, n_points)
