"""First- and second-order structure and marginal laws.

Closed forms use the kernel coefficient table.  Writing
``g(s) = sum_I w_I exp(lambda_I . s)``, the autocovariance factorises per axis:

    gamma(t) = kappa2 sum_{I,J} w_I w_J prod_k exp(lambda_k,sel |t_k|) / -(lambda_k,i_k + lambda_k,j_k)

where on axis ``k`` the surviving exponent is ``j_k`` when ``t_k >= 0`` and
``i_k`` otherwise.  Every closed form has a quadrature counterpart, which is
also the fallback for repeated eigenvalues.
"""

from __future__ import annotations

import itertools
from string import ascii_letters

import numpy as np

from .algebra import quad_rplus
from .errors import MomentError, ModelError
from .kernel import (
    has_coefficients,
    kernel_coefficients,
    kernel_grid,
    real_part,
    truncated_poly,
)
from .model import CARMA, LevyBasisSpec, ModelSpec, cumulant_function

METHODS = ("auto", "closed", "quadrature", "state")
ORIGIN_DEPTH = 8
ROUGH_ABS_TOL = 1e-7


def _kappa1(levy: LevyBasisSpec) -> float:
    k1 = levy.kappa1
    if k1 is None:
        raise MomentError("the mean of the driving noise does not exist")
    return k1


def _kappa2(levy: LevyBasisSpec) -> float:
    k2 = levy.kappa2
    if k2 is None:
        raise MomentError("the driving noise has infinite variance; second-order quantities are undefined")
    return k2


def _points(spec: ModelSpec, t) -> tuple[np.ndarray, bool]:
    """Normalise lags/frequencies to shape ``(n, d)``; flags a single point."""
    arr = np.asarray(t, dtype=float)
    if spec.d == 1:
        return arr.reshape(-1, 1), arr.ndim == 0
    return arr.reshape(-1, spec.d), arr.ndim == 1


def _decay_rate(spec: ModelSpec, power: float = 1.0) -> float:
    # polynomial factors from Jordan blocks slow the decay; halve the rate to keep the mapped integrand bounded
    slack = 1.0 if spec.distinct_eigenvalues else 0.5
    return power * slack * spec.slowest_decay


def mean(spec: ModelSpec, levy: LevyBasisSpec, method: str = "auto") -> float:
    """``E Y(t) = kappa1 * int g``."""
    k1 = _kappa1(levy)
    if k1 == 0:
        return 0.0
    if method == "closed" or (method == "auto" and has_coefficients(spec)):
        return k1 * kernel_coefficients(spec).integral()
    if method not in ("auto", "quadrature"):
        raise ModelError(f"unknown method {method!r}")
    f = lambda *mesh: kernel_grid(spec, [m.ravel() for m in mesh])
    return k1 * float(quad_rplus(f, spec.d, _decay_rate(spec)))


# --- state covariance ------------------------------------------------------------


def _state_response_grid(spec: ModelSpec, axes) -> np.ndarray:
    """``e^{A_1 s_1} ... e^{A_d s_d} c`` on a tensor grid; shape ``(n_1, ..., n_d, p)``."""
    from .algebra import mat_exp

    exps = [mat_exp(A, np.asarray(x).ravel()) for A, x in zip(spec.axis_matrices, axes)]
    T = np.einsum("nij,j->ni", exps[-1], spec.c)
    for E in reversed(exps[:-1]):
        T = np.einsum("nij,...j->n...i", E, T)
    return T


def state_covariance(spec: ModelSpec, levy: LevyBasisSpec, abs_tol: float = 1e-10) -> np.ndarray:
    """``Sigma = kappa2 int e^{A_1 s_1}...e^{A_d s_d} c c' (...)' ds`` by quadrature."""
    k2 = _kappa2(levy)

    def f(*mesh):
        H = _state_response_grid(spec, mesh)
        return H[..., :, None] * H[..., None, :]

    return k2 * quad_rplus(f, spec.d, _decay_rate(spec, 2.0), abs_tol=abs_tol,
                           chunk_points=2 ** 21 // spec.p ** 2)


def variance(spec: ModelSpec, levy: LevyBasisSpec, method: str = "auto") -> float:
    t0 = 0.0 if spec.d == 1 else np.zeros(spec.d)
    return autocovariance(spec, levy, t0, method=method)


# --- autocovariance --------------------------------------------------------------


def _pair_einsum(d: int) -> str:
    """``W[i..], W[j..], F_1[n,i1,j1], ..., F_d[n,id,jd] -> n``."""
    I = ascii_letters[:d]
    J = ascii_letters[d:2 * d]
    facs = ",".join(f"z{i}{j}" for i, j in zip(I, J))
    return f"{I},{J},{facs}->z"


def _orthant_factor(lam: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Per-axis factor ``exp(lambda_sel |t|) / -(lambda_i + lambda_j)``; shape ``(n, p, p)``."""
    denom = -(lam[:, None] + lam[None, :])
    pos = np.exp(np.abs(t)[:, None, None] * lam[None, None, :])   # exponent index j
    neg = np.exp(np.abs(t)[:, None, None] * lam[None, :, None])   # exponent index i
    return np.where((t >= 0)[:, None, None], pos, neg) / denom


def _acov_closed(spec: ModelSpec, k2: float, lags: np.ndarray) -> np.ndarray:
    kc = kernel_coefficients(spec)
    W = kc.weights
    factors = [_orthant_factor(lam, lags[:, k]) for k, lam in enumerate(kc.exponents)]
    vals = np.einsum(_pair_einsum(spec.d), W, W, *factors, optimize=True)
    return k2 * real_part(vals, what="autocovariance")


def _acov_quadrature(spec: ModelSpec, k2: float, lag: np.ndarray, abs_tol: float) -> float:
    lo, hi = np.maximum(-lag, 0.0), np.maximum(lag, 0.0)

    def f(*mesh):
        axes = [m.ravel() for m in mesh]
        g_lo = kernel_grid(spec, [x + s for x, s in zip(axes, lo)])
        g_hi = kernel_grid(spec, [x + s for x, s in zip(axes, hi)])
        return g_lo * g_hi

    return k2 * float(quad_rplus(f, spec.d, _decay_rate(spec, 2.0), abs_tol=abs_tol))


def _acov_state(spec: ModelSpec, levy: LevyBasisSpec, lags: np.ndarray) -> np.ndarray:
    from .algebra import mat_exp

    if not spec.commuting():
        raise ModelError("the state-covariance route needs commuting axis matrices")
    S = state_covariance(spec, levy)
    out = np.empty(len(lags))
    for n, t in enumerate(lags):
        left = spec.b.copy()
        right = spec.b.copy()
        for A, tk in zip(spec.axis_matrices, t):
            if tk >= 0:
                left = left @ mat_exp(A, tk)
            else:
                right = right @ mat_exp(A, -tk)
        out[n] = left @ S @ right
    return out


def autocovariance(spec: ModelSpec, levy: LevyBasisSpec, t, method: str = "auto",
                   abs_tol: float = 1e-11):
    """``gamma(t) = cov(Y(s), Y(s + t))`` for one lag (shape ``(d,)``) or many (``(n, d)``).

    ``method`` is ``closed`` (coefficient table, distinct eigenvalues only),
    ``quadrature`` (direct integration of ``g(s) g(s + t)``), ``state``
    (``b' e^{A t+} Sigma e^{A' t-} b``, commuting matrices only) or ``auto``.
    """
    if method not in METHODS:
        raise ModelError(f"unknown method {method!r}")
    k2 = _kappa2(levy)
    lags, scalar = _points(spec, t)
    if method == "auto":
        method = "closed" if has_coefficients(spec) else "quadrature"
    if method == "closed":
        out = _acov_closed(spec, k2, lags)
    elif method == "state":
        out = _acov_state(spec, levy, lags)
    else:
        out = np.array([_acov_quadrature(spec, k2, lag, abs_tol) for lag in lags])
    return float(out[0]) if scalar else out


def acov_coefficients(spec: ModelSpec, levy: LevyBasisSpec) -> dict[tuple[int, ...], np.ndarray]:
    """Orthant coefficient tensors ``d_v`` with ``gamma(t) = sum_K d_v[K] exp(sum_k lambda_k,K_k |t_k|)`` for ``t`` in orthant ``v``.

    ``d_v`` includes the factor ``kappa2``.
    """
    k2 = _kappa2(levy)
    kc = kernel_coefficients(spec)
    W = kc.weights
    d = spec.d
    I, J = ascii_letters[:d], ascii_letters[d:2 * d]
    denoms = [-1.0 / (lam[:, None] + lam[None, :]) for lam in kc.exponents]
    out = {}
    for v in itertools.product((1, -1), repeat=d):
        keep = "".join(J[k] if v[k] > 0 else I[k] for k in range(d))
        expr = f"{I},{J}," + ",".join(f"{i}{j}" for i, j in zip(I, J)) + f"->{keep}"
        out[v] = k2 * np.einsum(expr, W, W, *denoms)
    return out


# --- spectral density ------------------------------------------------------------


def spectral_density(spec: ModelSpec, levy: LevyBasisSpec, omega):
    """``f(omega) = (2 pi)^-d sum_v sum_K d_v[K] / prod_k (i v_k omega_k - lambda_k,K_k)``."""
    kc = kernel_coefficients(spec)
    coeffs = acov_coefficients(spec, levy)
    w, scalar = _points(spec, omega)
    d = spec.d
    K = ascii_letters[:d]
    expr = K + "," + ",".join(f"z{k}" for k in K) + "->z"
    total = np.zeros(len(w), dtype=complex)
    for v, D in coeffs.items():
        facs = [1.0 / (1j * v[k] * w[:, k][:, None] - kc.exponents[k][None, :]) for k in range(d)]
        total += np.einsum(expr, D, *facs)
    out = real_part(total / (2 * np.pi) ** d, what="spectral density")
    return float(out[0]) if scalar else out


def car_p_plane_acov(spec: ModelSpec, levy: LevyBasisSpec, t):
    """Autocovariance of a CAR(p) field on R^2 by the double-residue formula.

    Only the constant ``b_0`` enters, so the formula is unavailable for ``q > 0``.
    """
    if spec.mode != CARMA or spec.d != 2:
        raise ModelError("the CAR(p) plane formula needs a CARMA spec on R^2")
    if spec.q != 0 or np.any(spec.b[1:] != 0):
        raise ModelError("the CAR(p) plane formula does not extend to q > 0")
    if not spec.distinct_eigenvalues:
        raise ModelError("the CAR(p) plane formula needs distinct eigenvalues")
    k2 = _kappa2(levy)
    p = spec.p
    a1, a2 = spec.axis_polys
    lam1, lam2 = spec.spectra[0].values, spec.spectra[1].values
    trunc_pos = np.array([truncated_poly(a1, k)(lam1) for k in range(1, p + 1)])   # (k, lam1)
    trunc_neg = np.array([truncated_poly(a1, k)(-lam1) for k in range(1, p + 1)])  # (l, lam1)
    den1 = np.polyval(np.polyder(a1.array), lam1) * a1(-lam1)
    den2 = np.polyval(np.polyder(a2.array), lam2) * a2(-lam2)
    kk = np.arange(p)
    pow2 = lam2[None, None, :] ** (kk[:, None, None] + kk[None, :, None])   # (k, l, lam2)
    base = trunc_pos[:, None, :, None] * trunc_neg[None, :, :, None] * pow2[:, :, None, :]
    base = base / den1[None, None, :, None] / den2[None, None, None, :]   # (k, l, lam1, lam2)
    same = np.einsum("klab,l->ab", base, (-1.0) ** kk)
    opposite = np.einsum("klab,k->ab", base, (-1.0) ** kk)

    lags, scalar = _points(spec, t)
    out = np.empty(len(lags), dtype=complex)
    for n, (t1, t2) in enumerate(lags):
        C = same if t1 * t2 >= 0 else opposite
        E = np.exp(lam1[:, None] * abs(t1) + lam2[None, :] * abs(t2))
        out[n] = np.sum(C * E)
    out = k2 * spec.b[0] ** 2 * real_part(out, what="autocovariance")
    return float(out[0]) if scalar else out


# --- marginal law ----------------------------------------------------------------


def marginal_char_function(spec: ModelSpec, levy: LevyBasisSpec, u, abs_tol: float | None = None):
    """Characteristic function ``E exp(i u Y(t)) = exp(int zeta(u g(s)) ds)``; vectorised over ``u``.

    For stable noise with ``alpha < 2`` the integrand ``|u g|**alpha`` has a
    cusp wherever ``g`` vanishes and quadrature converges only algebraically,
    so the default tolerance drops from 1e-10 to 1e-7.  Kernels that change
    sign many times may still exhaust the point budget (QuadratureError).
    """
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    rate = _decay_rate(spec, levy.growth_order)
    rough = levy.is_stable and levy.jumps.alpha < 2
    if abs_tol is None:
        abs_tol = ROUGH_ABS_TOL if rough else 1e-10

    def f(*mesh):
        g = kernel_grid(spec, [m.ravel() for m in mesh])
        return cumulant_function(levy, g[..., None] * u_arr)

    log_phi = quad_rplus(f, spec.d, rate, abs_tol=abs_tol, origin_depth=ORIGIN_DEPTH if rough else 0)
    out = np.exp(np.asarray(log_phi))
    return complex(out[0]) if np.ndim(u) == 0 else out
