"""Unique-continuation diagnostics.

Frequency quantities are evaluated on tensor meshes in the ``(x, y)``
variables: cell midpoints carry multilinear averages of the field, cell
gradients are averaged edge differences, and the weight ``|y|^(1-2s)`` enters
through its exact cell average. Before profiling, coordinates are recentred
at ``z0`` and mapped by ``B^{-1}`` with ``B = Atilde(z0)^(1/2)`` so the
normalized coefficient equals the identity at the centre.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy import special

from .assembly import weight_antiderivative
from .exceptions import InsufficientResolution

MIN_SHELL_CELLS = 8


def _spd_sqrt(A):
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    return (V * np.sqrt(w)) @ V.T


@dataclass(frozen=True)
class FrequencyGeometry:
    """Recentring and normalizing map ``z' = B^{-1} (z - z0)``.

    ``coefficient`` maps physical points ``(m, d)`` to matrices ``(m, d, d)``.
    """

    center: np.ndarray
    transform: np.ndarray
    coefficient: Callable
    Lambda: float

    @property
    def dim(self):
        return self.center.size

    def to_normalized(self, z):
        return np.linalg.solve(self.transform, (np.atleast_2d(z) - self.center).T).T

    def to_physical(self, zn):
        return np.atleast_2d(zn) @ self.transform.T + self.center

    def normalized_coefficient(self, zn):
        """``B^{-1} Atilde(z) B^{-1}`` at normalized points."""
        A = self.coefficient(self.to_physical(zn))
        Binv = np.linalg.inv(self.transform)
        return Binv[None] @ A @ Binv.T[None]


def constant_coefficient(A):
    A = np.asarray(A, float)
    return lambda z: np.broadcast_to(A, (np.atleast_2d(z).shape[0],) + A.shape)


def extension_coefficient(grid, coeff):
    """``Atilde(x, y) = diag(A(x), 1)`` with ``A`` interpolated (nearest node) from the grid."""
    n = grid.n
    A = coeff.A

    def field(z):
        z = np.atleast_2d(z)
        idx = np.zeros(z.shape[0], dtype=int)
        for d in range(n):
            k = np.clip(np.rint((z[:, d] + grid.Lbox) / grid.h).astype(int), 0, grid.N - 1)
            idx = idx * grid.N + k
        out = np.zeros((z.shape[0], n + 1, n + 1))
        out[:, :n, :n] = A[idx]
        out[:, n, n] = 1.0
        return out

    return field


def build_frequency_geometry(coefficient, center, normalize=True, Lambda=None):
    """Frequency geometry around ``center``.

    ``coefficient`` is a constant matrix or a callable on points. With
    ``normalize`` the map uses ``B = Atilde(center)^(1/2)``; otherwise ``B = I``.
    """
    center = np.asarray(center, float).ravel()
    coef = coefficient if callable(coefficient) else constant_coefficient(coefficient)
    A0 = coef(center[None, :])[0]
    B = _spd_sqrt(A0) if normalize else np.eye(center.size)
    if Lambda is None:
        ev = np.linalg.eigvalsh(A0 if not normalize else np.eye(center.size))
        Lambda = float(max(ev.max(), 1.0 / ev.min(), 1.0))
    return FrequencyGeometry(center, B, coef, float(Lambda))


def mu_beta(coefficient, z, normalization=None):
    """``mu = Atilde z . z / |z|^2`` and ``beta = Atilde z / mu``.

    ``coefficient`` is a matrix, a callable on points or a
    :class:`FrequencyGeometry`; in the last case ``z`` is a normalized
    coordinate and the normalized coefficient is used. ``normalization``
    (a FrequencyGeometry) may be passed separately for the same effect.
    """
    geom = coefficient if isinstance(coefficient, FrequencyGeometry) else normalization
    z = np.atleast_2d(np.asarray(z, float))
    r2 = np.sum(z * z, axis=1)
    if np.any(r2 == 0):
        raise ValueError("mu and beta are undefined at z = 0")
    if geom is not None:
        A = geom.normalized_coefficient(z)
    elif callable(coefficient):
        A = coefficient(z)
    else:
        A = np.broadcast_to(np.asarray(coefficient, float), (z.shape[0], z.shape[1], z.shape[1]))
    Az = np.einsum("kij,kj->ki", A, z)
    mu = np.sum(Az * z, axis=1) / r2
    beta = Az / mu[:, None]
    return mu, beta


# --------------------------------------------------------------------------
# tensor-mesh fields


@dataclass(frozen=True)
class TensorField:
    """Nodal values on a tensor mesh; the last axis is the extension variable ``y``."""

    axes: Sequence[np.ndarray]
    values: np.ndarray
    s: float

    @classmethod
    def from_reflection(cls, reflected, grid):
        """Tensor field of an even reflection (``n = 1`` or ``2``)."""
        shape = grid.shape + (reflected.y_nodes.size,)
        axes = [np.asarray(grid.axis)] * grid.n + [np.asarray(reflected.y_nodes)]
        return cls(axes, np.asarray(reflected.values).reshape(shape), reflected.s)


def _corner_average(values, axis_count):
    out = values
    for d in range(axis_count):
        sl0 = [slice(None)] * axis_count
        sl1 = [slice(None)] * axis_count
        sl0[d] = slice(None, -1)
        sl1[d] = slice(1, None)
        out = 0.5 * (out[tuple(sl0)] + out[tuple(sl1)])
    return out


@dataclass(frozen=True)
class _Cells:
    centers: np.ndarray
    volumes: np.ndarray
    sides: np.ndarray
    values: np.ndarray
    grads: np.ndarray
    weight: np.ndarray


def _cells(field):
    axes = [np.asarray(a, float) for a in field.axes]
    d = len(axes)
    V = np.asarray(field.values, float)
    lengths = [np.diff(a) for a in axes]
    mids = [0.5 * (a[:-1] + a[1:]) for a in axes]
    mesh = np.meshgrid(*mids, indexing="ij")
    centers = np.stack([m.ravel() for m in mesh], axis=1)
    L = np.meshgrid(*lengths, indexing="ij")
    sides = np.stack([l.ravel() for l in L], axis=1)
    vol = np.prod(sides, axis=1)
    vals = _corner_average(V, d).ravel()
    grads = []
    for k in range(d):
        sl0 = [slice(None)] * d
        sl1 = [slice(None)] * d
        sl0[k] = slice(None, -1)
        sl1[k] = slice(1, None)
        diff = V[tuple(sl1)] - V[tuple(sl0)]
        others = [j for j in range(d) if j != k]
        for j in others:
            a0 = [slice(None)] * d
            a1 = [slice(None)] * d
            a0[j] = slice(None, -1)
            a1[j] = slice(1, None)
            diff = 0.5 * (diff[tuple(a0)] + diff[tuple(a1)])
        shape = [1] * d
        shape[k] = -1
        grads.append((diff / lengths[k].reshape(shape)).ravel())
    grads = np.stack(grads, axis=1)
    y = axes[-1]
    wy = np.diff(weight_antiderivative(y, field.s)) / np.diff(y)
    Wy = np.meshgrid(*([np.ones(m.size) for m in mids[:-1]] + [wy]), indexing="ij")
    weight = np.ones(vol.size)
    for w in Wy:
        weight = weight * w.ravel()
    return _Cells(centers, vol, sides, vals, grads, weight)


@dataclass(frozen=True)
class FrequencyProfile:
    """Sampled ``H(r)``, ``D(r)`` and ``N(r) = r D / H``."""

    radii: np.ndarray
    H: np.ndarray
    D: np.ndarray
    N: np.ndarray
    shell_width: float
    method: str
    shell_counts: np.ndarray


def _sphere_area(dim, r):
    return dim * np.pi ** (dim / 2.0) / special.gamma(dim / 2.0 + 1.0) * r ** (dim - 1)


def _ball_volume(dim, r):
    return np.pi ** (dim / 2.0) / special.gamma(dim / 2.0 + 1.0) * r**dim


def frequency_profile(field, geometry, radii, method="shell", shell_width=None):
    """Frequency profile of a reflected field around ``geometry.center``.

    Parameters
    ----------
    field : TensorField
    geometry : FrequencyGeometry
    radii : array_like
        Radii in normalized coordinates.
    method : {"shell", "smoothed"}
        ``shell`` bins cells with ``|r' - r| < width/2`` and rescales the
        shell average by the sphere area; ``smoothed`` integrates against a
        hat function of half-width ``width`` (surface term) and a linear ramp
        (volume term).
    shell_width : float, optional
        Defaults to the largest cell side inside the largest ball.

    Raises
    ------
    InsufficientResolution
        If a shell contains fewer than 8 cells or a radius is below three
        shell widths.
    ValueError
        If ``H`` vanishes at a sampled radius.
    """
    radii = np.asarray(radii, float)
    cells = _cells(field)
    zn = geometry.to_normalized(cells.centers)
    rn = np.linalg.norm(zn, axis=1)
    detB = abs(np.linalg.det(geometry.transform))
    Binv = np.linalg.inv(geometry.transform)
    sides_n = np.abs(cells.sides @ Binv.T)
    inside = rn <= radii.max() * (1 + 1e-12) + 0.0
    if shell_width is None:
        shell_width = float(sides_n[inside].max()) if inside.any() else float(sides_n.max())
    dV = cells.volumes / detB
    # mu is only needed off the centre; the centre cell gets a placeholder
    mu, _ = mu_beta(geometry, np.where(rn[:, None] > 0, zn, 1.0))
    mu = np.where(rn > 0, mu, 1.0)
    # Atilde grad U . grad U is invariant under the normalizing map
    A = geometry.coefficient(cells.centers)
    energy = np.einsum("ki,kij,kj->k", cells.grads, A, cells.grads)
    dens_H = cells.weight * mu * cells.values**2
    dens_D = cells.weight * energy

    dim = geometry.dim
    H = np.zeros(radii.size)
    D = np.zeros(radii.size)
    counts = np.zeros(radii.size, dtype=int)
    for k, r in enumerate(radii):
        if r < 3 * shell_width:
            raise InsufficientResolution(f"radius {r:.3g} is below three shell widths ({shell_width:.3g})")
        shell = np.abs(rn - r) < 0.5 * shell_width
        counts[k] = int(shell.sum())
        if counts[k] < MIN_SHELL_CELLS:
            raise InsufficientResolution(f"shell at r={r:.3g} holds {counts[k]} cells")
        if method == "shell":
            avg = np.sum(dens_H[shell] * dV[shell]) / np.sum(dV[shell])
            H[k] = avg * _sphere_area(dim, r)
            ball = rn < r
            # same measure correction as the shell: rescale to the exact ball volume
            D[k] = np.sum(dens_D[ball] * dV[ball]) * _ball_volume(dim, r) / np.sum(dV[ball])
        elif method == "smoothed":
            hat = np.clip(1.0 - np.abs(rn - r) / shell_width, 0.0, None) / shell_width
            H[k] = np.sum(dens_H * hat * dV)
            ramp = np.clip(0.5 + (r - rn) / shell_width, 0.0, 1.0)
            D[k] = np.sum(dens_D * ramp * dV)
        else:
            raise ValueError(f"unknown method {method!r}")
    if np.any(H <= 0):
        raise ValueError("H vanishes on a sampled sphere; the field is zero there")
    N = radii * D / H
    return FrequencyProfile(radii, H, D, N, float(shell_width), method, counts)


@dataclass(frozen=True)
class DoublingReport:
    """Doubling ratios and the fitted monotonicity constant."""

    max_ratio: float
    ratios: np.ndarray
    C_star: float
    C_cap: float
    violation: bool


def doubling_check(profile, C_cap=None):
    """``max H(2r)/H(r)`` and the least ``C* >= 0`` making ``N(r) e^{C* r}`` nondecreasing.

    ``H(2r)`` is interpolated log-log between sampled radii; only radii with
    ``2r`` in range contribute. ``C_cap`` defaults to ``50 / r_max``.
    """
    r = profile.radii
    if r.size < 8 or r.max() < 4 * r.min():
        raise InsufficientResolution("doubling check needs 8 radii spanning a factor of 4")
    logH = np.log(profile.H)
    usable = 2 * r <= r.max() * (1 + 1e-12)
    ratios = np.exp(np.interp(np.log(2 * r[usable]), np.log(r), logH) - logH[usable])
    N = profile.N
    C = 0.0
    for k in range(r.size - 1):
        if N[k + 1] < N[k]:
            if N[k + 1] <= 0:
                C = np.inf
                break
            C = max(C, np.log(N[k] / N[k + 1]) / (r[k + 1] - r[k]))
    cap = 50.0 / r.max() if C_cap is None else float(C_cap)
    return DoublingReport(float(ratios.max()), ratios, float(C), cap, bool(C > cap))


# --------------------------------------------------------------------------
# strong unique continuation probe


@dataclass(frozen=True)
class SUCPResult:
    """Smallest value of ``||u||^2_{M,O} + ||S u||^2_{M,O}`` over ``||u||_M = 1``."""

    value: float
    minimizer: np.ndarray
    spectrum: np.ndarray
    nodes: np.ndarray


def sucp_probe(S, partition, O, weights=(1.0, 1.0)):
    """Quantitative surrogate for strong unique continuation.

    ``S`` is a FractionalOperator (or any object with ``matrix`` and
    ``masses``); ``O`` a non-empty index set, boolean mask or region
    understood by :func:`fraclab.grid.select_nodes` on ``partition``.
    """
    m = np.asarray(S.masses, float)
    if isinstance(O, (list, tuple, np.ndarray)) and np.asarray(O).dtype == bool:
        nodes = np.flatnonzero(O)
    else:
        nodes = np.unique(np.asarray(O, int))
    if nodes.size == 0:
        raise ValueError("O must be non-empty")
    a, b = weights
    mo = np.zeros_like(m)
    mo[nodes] = m[nodes]
    Smat = np.asarray(S.matrix, float)
    Q = a * np.diag(mo) + b * Smat.T @ (mo[:, None] * Smat)
    isq = 1.0 / np.sqrt(m)
    B = Q * isq[:, None] * isq[None, :]
    B = 0.5 * (B + B.T)
    lam, W = sla.eigh(B, driver="evd")
    u = W[:, 0] * isq
    return SUCPResult(float(lam[0]), u, lam, nodes)
