"""Spectral calculus of the mass-weighted local operator.

Everything here is built on one dense eigendecomposition of the symmetrized
matrix ``M^{-1/2} K M^{-1/2}``; eigenvectors are mapped back so they are
orthonormal in the pairing ``<u, v>_M = sum_i m_i u_i v_i``.
"""
from __future__ import annotations

from dataclasses import dataclass
import warnings

import numpy as np
import scipy.linalg as sla
from scipy import special

from .exceptions import AssemblyError, QuadratureError, QuadratureTailWarning


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs ``L v_k = lambda_k v_k`` with ``V^T M V = I``."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    masses: np.ndarray
    bc: str = "reflecting"

    @property
    def sqrt_masses(self):
        return np.sqrt(self.masses)

    @property
    def lambda_max(self):
        return float(self.eigenvalues[-1])

    def smallest_positive(self):
        pos = self.eigenvalues[self.eigenvalues > 0]
        return float(pos[0]) if pos.size else np.inf

    def symmetric_function(self, phi_values):
        """``M V diag(phi) V^T M``, assembled symmetrically."""
        W = self.eigenvectors * self.sqrt_masses[:, None]
        F = (W * phi_values) @ W.T
        F = 0.5 * (F + F.T)
        sm = self.sqrt_masses
        return F * sm[:, None] * sm[None, :]


def eigendecompose(op, snap_tol=1e-10):
    """Full eigendecomposition of a mass-symmetric discrete operator.

    Eigenvalues within ``snap_tol * lambda_max`` of zero are set to exactly 0;
    under reflecting truncation the null vector is replaced by the exact
    normalized constant.
    """
    K = np.asarray(op.stiffness, float)
    m = np.asarray(op.masses, float)
    asym = np.linalg.norm(K - K.T) / max(np.linalg.norm(K), 1e-300)
    if asym > 1e-8:
        raise AssemblyError(f"operator is not mass-symmetric (relative asymmetry {asym:.2e})")
    isq = 1.0 / np.sqrt(m)
    B = K * isq[:, None] * isq[None, :]
    B = 0.5 * (B + B.T)
    lam, W = sla.eigh(B, driver="evd")
    scale = max(abs(lam[-1]), 1.0)
    if lam[0] < -snap_tol * scale:
        raise AssemblyError(f"operator has a negative eigenvalue {lam[0]:.3e}")
    lam = np.where(np.abs(lam) <= snap_tol * scale, 0.0, lam)
    V = W * isq[:, None]
    if getattr(op, "bc", None) == "reflecting" and lam[0] == 0.0:
        V[:, 0] = 1.0 / np.sqrt(m.sum())
    for a in (lam, V):
        a.setflags(write=False)
    return SpectralDecomposition(lam, V, m, getattr(op, "bc", "reflecting"))


def apply_spectral_function(decomp, phi, vector):
    """Return ``V diag(phi(lambda)) V^T M vector``.

    ``phi`` is a callable on the eigenvalue array or an array of its values.
    ``vector`` may hold several right-hand sides as columns.
    """
    values = phi(decomp.eigenvalues) if callable(phi) else np.asarray(phi, float)
    values = np.broadcast_to(np.asarray(values, float), decomp.eigenvalues.shape)
    if not np.all(np.isfinite(values)):
        raise ValueError("spectral function is not finite on the spectrum")
    x = np.asarray(vector, float)
    V = decomp.eigenvectors
    weighted = decomp.masses * x if x.ndim == 1 else decomp.masses[:, None] * x
    coeffs = V.T @ weighted
    if x.ndim == 1:
        return V @ (values * coeffs)
    return V @ (values[:, None] * coeffs)


def matrix_function(decomp, phi):
    """Dense ``phi(L) = V diag(phi(lambda)) V^T M``."""
    values = phi(decomp.eigenvalues) if callable(phi) else np.asarray(phi, float)
    if not np.all(np.isfinite(values)):
        raise ValueError("spectral function is not finite on the spectrum")
    return decomp.symmetric_function(values) / decomp.masses[:, None]


def _power(lam, s):
    out = np.zeros_like(lam)
    pos = lam > 0
    out[pos] = lam[pos] ** s
    return out


@dataclass(frozen=True)
class FractionalOperator:
    """Dense ``L^s`` with its extracted pair kernel.

    ``kernel[i, j] = -(M S)_{ij} / (m_i m_j)`` for ``i != j`` (zero diagonal);
    ``killing = S 1`` vanishes under reflecting truncation.
    """

    s: float
    matrix: np.ndarray
    stiffness: np.ndarray
    kernel: np.ndarray
    killing: np.ndarray
    masses: np.ndarray

    def apply(self, v):
        return self.matrix @ v

    def dirichlet_form(self, f, g):
        """``1/2 sum_{i!=j} (f_i-f_j)(g_i-g_j) K_ij m_i m_j + sum_i kappa_i f_i g_i m_i``."""
        m = self.masses
        Km = self.kernel * m[:, None] * m[None, :]
        df = f[:, None] - f[None, :]
        dg = g[:, None] - g[None, :]
        return 0.5 * float(np.sum(df * dg * Km)) + float(np.sum(self.killing * f * g * m))


def fractional_power(decomp, s):
    """Spectral power ``S = V diag(lambda^s) V^T M`` for ``s`` in ``(0, 1]``."""
    if not 0.0 < s <= 1.0:
        raise ValueError(f"s must lie in (0, 1], got {s}")
    stiff = decomp.symmetric_function(_power(decomp.eigenvalues, s))
    m = decomp.masses
    S = stiff / m[:, None]
    kernel = -stiff / (m[:, None] * m[None, :])
    np.fill_diagonal(kernel, 0.0)
    killing = stiff.sum(axis=1) / m
    for a in (S, stiff, kernel, killing):
        a.setflags(write=False)
    return FractionalOperator(float(s), S, stiff, kernel, killing, m)


def heat_kernel(decomp, t):
    """Symmetric heat kernel ``p_t(i, j) = sum_k exp(-t lambda_k) v_k(i) v_k(j)``.

    ``(exp(-tL) f)_i = sum_j p_t(i, j) f_j m_j``.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    V = decomp.eigenvectors
    p = (V * np.exp(-t * decomp.eigenvalues)) @ V.T
    return 0.5 * (p + p.T)


def heat_log_slope(grid, decomp, t, center=None, r_range=None):
    """Least-squares slope of ``log p_t(c, j)`` against ``|x_c - x_j|^2 / t``.

    Returns ``(slope, intercept)``. A negative slope is the discrete
    counterpart of Gaussian decay.
    """
    c = grid.size // 2 if center is None else center
    p = heat_kernel(decomp, t)[c]
    d2 = np.sum((grid.coords - grid.coords[c]) ** 2, axis=1)
    if r_range is None:
        r_range = (np.sqrt(t), 3 * np.sqrt(t))
    sel = (d2 >= r_range[0] ** 2) & (d2 <= r_range[1] ** 2) & (p > 0)
    if sel.sum() < 3:
        raise ValueError("too few nodes in the separation range")
    slope, intercept = np.polyfit(d2[sel] / t, np.log(p[sel]), 1)
    return float(slope), float(intercept)


# --------------------------------------------------------------------------
# kernels from the heat semigroup


def upper_gamma_neg(s, x):
    """Upper incomplete gamma ``Gamma(-s, x)`` for ``s`` in (0, 1), ``x > 0``."""
    x = np.asarray(x, float)
    g1 = special.gammaincc(1.0 - s, x) * special.gamma(1.0 - s)
    return (x ** (-s) * np.exp(-x) - g1) / s


def lower_tail_expm1(s, x):
    """``int_0^x (e^{-u} - 1) u^{-1-s} du`` for ``x >= 0``."""
    x = np.atleast_1d(np.asarray(x, float))
    out = np.zeros_like(x)
    small = (x > 0) & (x < 2.0)
    xs = x[small]
    term = np.ones_like(xs)
    acc = np.zeros_like(xs)
    for k in range(1, 60):
        term = term * (-xs) / k
        acc += term / (k - s)
    out[small] = acc * xs ** (-s)
    big = x >= 2.0
    xb = x[big]
    out[big] = special.gamma(-s) - upper_gamma_neg(s, xb) + xb ** (-s) / s
    return out


@dataclass(frozen=True)
class QuadratureSpec:
    """Log-spaced time grid ``[t_min, t_max]`` with ``nodes`` points."""

    t_min: float = 1e-6
    t_max: float = 1e6
    nodes: int = 400
    tails: bool = True


def _log_trapezoid(t_min, t_max, nodes):
    tau = np.linspace(np.log(t_min), np.log(t_max), nodes)
    w = np.full(nodes, tau[1] - tau[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return np.exp(tau), w


def heat_time_weights(eigenvalues, s, quad):
    """Per-eigenvalue ``int (e^{-t lam} - 1) t^{-1-s} dt`` by log-trapezoid plus tails.

    Subtracting 1 removes the ``t = 0`` identity kernel, which has no
    off-diagonal part, so the off-diagonal entries of the resulting matrix are
    exactly the time integrals of ``p_t(i, j)``.
    """
    lam = np.asarray(eigenvalues, float)
    t, w = _log_trapezoid(quad.t_min, quad.t_max, quad.nodes)
    integrand = np.expm1(-np.outer(lam, t)) * t ** (-s)
    c = integrand @ w
    pos = lam > 0
    lo = np.zeros_like(lam)
    hi = np.zeros_like(lam)
    lo[pos] = lam[pos] ** s * lower_tail_expm1(s, lam[pos] * quad.t_min)
    hi[pos] = lam[pos] ** s * upper_gamma_neg(s, lam[pos] * quad.t_max) - quad.t_max ** (-s) / s
    return c, lo, hi


def tail_fractions(decomp, s, quad):
    """Relative size of the unintegrated tails for the extreme non-zero modes."""
    lam_hi = decomp.lambda_max
    lam_lo = decomp.smallest_positive()
    full = abs(special.gamma(-s))
    lower = abs(lower_tail_expm1(s, lam_hi * quad.t_min)[0]) / full
    upper = abs(upper_gamma_neg(s, lam_lo * quad.t_max)) / full if np.isfinite(lam_lo) else 0.0
    return float(lower), float(upper)


def kernel_from_heat(decomp, s, quad=None):
    """Pair kernel ``(1/|Gamma(-s)|) int_0^inf p_t(i, j) t^{-1-s} dt`` (off-diagonal).

    With ``quad.tails`` the truncated ranges ``[0, t_min]`` and
    ``[t_max, inf)`` are added in closed form mode by mode; otherwise a range
    leaving more than 1% of the integral is rejected.
    """
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    quad = QuadratureSpec() if quad is None else quad
    lower, upper = tail_fractions(decomp, s, quad)
    c, lo, hi = heat_time_weights(decomp.eigenvalues, s, quad)
    if quad.tails:
        c = c + lo + hi
    elif max(lower, upper) > 0.01:
        raise QuadratureError(
            f"time range leaves {100 * max(lower, upper):.2f}% of the kernel integral"
        )
    V = decomp.eigenvectors
    K = (V * c) @ V.T / abs(special.gamma(-s))
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, 0.0)
    return K


def kernel_decay_exponent(grid, kernel, r_min, r_max, rows=None):
    """Fitted log-log slope of ``kernel`` against distance for mid-grid rows."""
    if rows is None:
        rows = [grid.size // 2] if grid.n == 1 else [grid.size // 2]
    d_all, k_all = [], []
    for r in rows:
        d = np.linalg.norm(grid.coords - grid.coords[r], axis=1)
        sel = (d >= r_min) & (d <= r_max) & (kernel[r] > 0)
        d_all.append(d[sel])
        k_all.append(kernel[r, sel])
    d = np.concatenate(d_all)
    k = np.concatenate(k_all)
    slope, _ = np.polyfit(np.log(d), np.log(k), 1)
    return float(slope)


# --------------------------------------------------------------------------
# Poisson (extension) symbols


def extension_constant(s):
    """``d_s = Gamma(-s) / (4^s Gamma(s))``, negative for ``s`` in (0, 1)."""
    return special.gamma(-s) / (4.0**s * special.gamma(s))


def poisson_symbol_exact(lam, y, s):
    """``(2/Gamma(s)) (sqrt(lam) y / 2)^s K_s(sqrt(lam) y)``, equal to 1 at ``lam = 0``."""
    lam = np.asarray(lam, float)
    z = np.sqrt(np.maximum(lam, 0.0)) * y
    out = np.ones_like(z)
    pos = z > 0
    zp = z[pos]
    with np.errstate(under="ignore"):
        # kve = kv * e^z keeps the large-argument regime finite
        out[pos] = 2.0 / special.gamma(s) * (zp / 2.0) ** s * special.kve(s, zp) * np.exp(-zp)
    return out


def poisson_symbol_quadrature(lam, y, s, nodes=None, u_min=1e-2, u_max=None):
    """Heat-semigroup representation of the Poisson symbol by log-trapezoid.

    In the variable ``u = 4t / y^2`` the symbol reads
    ``(1/Gamma(s)) int exp(-1/u - u y^2 lam / 4) u^{-1-s} du``. The range
    beyond ``u_max`` is added in closed form for the zero mode.
    """
    if y <= 0:
        raise ValueError("y must be positive")
    if u_max is None:
        u_max = np.exp(min(40.0 / s, 700.0))
    if nodes is None:
        nodes = int(20 * (np.log(u_max) - np.log(u_min))) + 1
    lam = np.asarray(lam, float)
    kappa = 0.25 * y * y * lam
    u, w = _log_trapezoid(u_min, u_max, nodes)
    expo = -1.0 / u[None, :] - np.outer(kappa, u)
    vals = np.exp(expo) * u[None, :] ** (-s)
    out = vals @ w
    zero_tail = special.gammainc(s, 1.0 / u_max) * special.gamma(s)
    tail = np.where(kappa == 0, zero_tail, zero_tail * np.exp(-np.minimum(kappa * u_max, 700.0)))
    lower = special.gammaincc(s, 1.0 / u_min) * special.gamma(s)
    if lower > 1e-12:
        warnings.warn("Poisson quadrature lower range truncates mass", QuadratureTailWarning)
    return (out + tail) / special.gamma(s)


def poisson_kernel_apply(decomp, s, y, trace_datum, method="quadrature"):
    """Evaluate the extension ``U(., y)`` of ``trace_datum`` through the Poisson symbol."""
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    if method == "quadrature":
        phi = poisson_symbol_quadrature(decomp.eigenvalues, y, s)
    elif method == "exact":
        phi = poisson_symbol_exact(decomp.eigenvalues, y, s)
    else:
        raise ValueError(f"unknown method {method!r}")
    return apply_spectral_function(decomp, phi, trace_datum)
