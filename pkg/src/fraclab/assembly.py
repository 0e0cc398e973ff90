"""Flux-form assembly of the local elliptic operator and the weighted extension operator.

Both operators are returned as a symmetric *stiffness* matrix ``K`` together
with a diagonal mass vector ``m``; the operator acting on nodal values is
``M^{-1} K``. Keeping ``K`` symmetric is what makes every downstream identity
(DN symmetry, Dirichlet-form extraction) exact up to round-off.
"""
from __future__ import annotations

from dataclasses import dataclass
import logging

import numpy as np
import scipy.sparse as sp

from .exceptions import AssemblyError
from .grid import trapezoid_weights

logger = logging.getLogger(__name__)


def harmonic_mean(a, b):
    return 2.0 * a * b / (a + b)


@dataclass(frozen=True)
class DiscreteEllipticOperator:
    """Discrete ``L = -div(A grad)`` on a grid, stored as ``L_mat = M^{-1} K``."""

    stiffness: np.ndarray
    masses: np.ndarray
    bc: str
    n: int
    N: int
    h: float
    mmatrix_report: dict

    @property
    def matrix(self):
        return self.stiffness / self.masses[:, None]

    @property
    def size(self):
        return self.masses.size

    @property
    def is_mass_symmetric(self):
        K = self.stiffness
        return np.linalg.norm(K - K.T) <= 1e-12 * np.linalg.norm(K)

    def apply(self, u):
        return (self.stiffness @ u) / (self.masses if np.ndim(u) == 1 else self.masses[:, None])

    def energy(self, u, v=None):
        """Discrete ``int A grad u . grad v``."""
        v = u if v is None else v
        return float(u @ self.stiffness @ v)


def _axis_strides(n, N):
    return [N ** (n - 1 - d) for d in range(n)]


def assemble_local_operator(grid, coeff):
    """Assemble the flux-form finite-volume stiffness of ``-div(A grad)``.

    Each face between neighbouring nodes carries the conductance
    ``harmonic_mean(A_ii^(d), A_jj^(d)) * transverse_measure / h``; in the
    interior this is ``a_face * h^(n-2)``. Absorbing truncation adds a ghost
    node held at zero one spacing beyond every boundary face. Off-diagonal
    entries of ``A`` (2-D only) enter through a cell-centred symmetric
    cross-difference term.
    """
    n, N, h = grid.n, grid.N, grid.h
    K = grid.size
    A = coeff.A
    if A.shape != (K, n, n):
        raise AssemblyError("coefficient field does not match the grid")
    w1 = trapezoid_weights(N, h)
    idx = np.indices(grid.shape).reshape(n, -1)
    strides = _axis_strides(n, N)
    stiff = np.zeros((K, K))

    for d in range(n):
        transverse = np.ones(K)
        for e in range(n):
            if e != d:
                transverse *= w1[idx[e]]
        a = A[:, d, d]
        left = np.flatnonzero(idx[d] < N - 1)
        right = left + strides[d]
        c = harmonic_mean(a[left], a[right]) * transverse[left] / h
        np.add.at(stiff, (left, left), c)
        np.add.at(stiff, (right, right), c)
        np.add.at(stiff, (left, right), -c)
        np.add.at(stiff, (right, left), -c)
        if grid.bc == "absorbing":
            for end in (0, N - 1):
                nodes = np.flatnonzero(idx[d] == end)
                np.add.at(stiff, (nodes, nodes), a[nodes] * transverse[nodes] / h)

    if n == 2 and not coeff.is_diagonal:
        stiff += _cross_term_stiffness(grid, A[:, 0, 1])

    stiff = 0.5 * (stiff + stiff.T)
    masses = np.asarray(grid.masses, float)
    off = stiff / masses[:, None]
    np.fill_diagonal(off, 0.0)
    max_positive = float(off.max()) if K > 1 else 0.0
    report = {"is_m_matrix": max_positive <= 0.0, "max_positive_offdiag": max_positive}
    if not report["is_m_matrix"]:
        if coeff.is_diagonal:
            raise AssemblyError("diagonal coefficient produced a positive off-diagonal entry")
        logger.info("anisotropic stencil is not an M-matrix (max off-diagonal %.3g)", max_positive)
    return DiscreteEllipticOperator(stiff, masses, grid.bc, n, N, h, report)


def _cross_term_stiffness(grid, a12):
    """Energy ``2 a12 u_x u_y`` integrated over each grid cell with cell-averaged differences."""
    N, h = grid.N, grid.h
    K = grid.size
    stiff = np.zeros((K, K))
    I, J = np.meshgrid(np.arange(N - 1), np.arange(N - 1), indexing="ij")
    I, J = I.ravel(), J.ravel()
    c00 = I * N + J
    c10 = (I + 1) * N + J
    c01 = I * N + J + 1
    c11 = (I + 1) * N + J + 1
    corners = np.stack([c00, c10, c01, c11], axis=1)
    gx = np.array([-1.0, 1.0, -1.0, 1.0]) / (2 * h)
    gy = np.array([-1.0, -1.0, 1.0, 1.0]) / (2 * h)
    local = np.outer(gx, gy) + np.outer(gy, gx)
    acell = a12[corners].mean(axis=1) * h * h
    for a_, b_ in np.ndindex(4, 4):
        np.add.at(stiff, (corners[:, a_], corners[:, b_]), acell * local[a_, b_])
    return stiff


# --------------------------------------------------------------------------
# extension operator


def weight_antiderivative(y, s):
    """Antiderivative of ``|y|^(1-2s)`` vanishing at 0."""
    y = np.asarray(y, float)
    return np.sign(y) * np.abs(y) ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s)


def conjugate_weight_antiderivative(y, s):
    """Antiderivative of ``|y|^(2s-1)`` vanishing at 0."""
    y = np.asarray(y, float)
    return np.sign(y) * np.abs(y) ** (2.0 * s) / (2.0 * s)


def cell_weight_integrals(y_nodes, s):
    """Exact ``int_{y_j}^{y_{j+1}} |y|^(1-2s) dy`` for consecutive nodes."""
    return np.diff(weight_antiderivative(y_nodes, s))


def cell_conductances(y_nodes, s):
    """Flux-exact y-conductances ``1 / int_cell |y|^(2s-1) dy``.

    This is the harmonic mean of the weight over the cell divided by its
    length; profiles with constant weighted flux (``y^(2s)`` near the trace)
    are reproduced exactly at the nodes.
    """
    return 1.0 / np.diff(conjugate_weight_antiderivative(y_nodes, s))


def nodal_weight_integrals(cell_w):
    """Lumped (dual-cell) weights: half of each adjacent cell integral."""
    omega = np.zeros(cell_w.size + 1)
    omega[:-1] += 0.5 * cell_w
    omega[1:] += 0.5 * cell_w
    return omega


@dataclass(frozen=True)
class ExtensionOperator:
    """Weighted stiffness of ``-div(|y|^(1-2s) diag(A, 1) grad)`` on an (x, y) mesh.

    Unknowns are ordered x-major: node ``(i, j)`` has index ``i * ny + j``.
    ``cell_weights`` are the exact integrals of ``|y|^(1-2s)`` per y-cell,
    ``nodal_weights`` their dual-cell lumping and ``conductances`` the
    flux-exact y-couplings.
    """

    stiffness: sp.csr_matrix
    masses: np.ndarray
    cell_weights: np.ndarray
    nodal_weights: np.ndarray
    conductances: np.ndarray
    y_nodes: np.ndarray
    x_operator: DiscreteEllipticOperator
    s: float
    nx: int
    ny: int

    @property
    def matrix(self):
        return sp.diags(1.0 / self.masses) @ self.stiffness

    def toarray(self):
        return self.matrix.toarray()

    def index(self, i, j):
        return i * self.ny + j

    def energy(self, U):
        u = np.ravel(U)
        return float(u @ (self.stiffness @ u))


def y_stiffness(conductances):
    """1-D stiffness ``sum_j c_j (e_j - e_{j+1})(e_j - e_{j+1})^T``."""
    c = np.asarray(conductances, float)
    main = np.zeros(c.size + 1)
    main[:-1] += c
    main[1:] += c
    return sp.diags([main, -c, -c], [0, 1, -1], format="csr")


def assemble_extension_operator(ext_grid, coeff, s):
    """Assemble the weighted degenerate operator on an extension mesh.

    ``coeff`` is a :class:`~fraclab.grid.CoefficientField` on
    ``ext_grid.grid`` or an already assembled local operator. The x-part
    reuses the local stiffness (same truncation condition as the fractional
    power), scaled by dual-cell weight integrals; the y-part uses exact cell
    integrals of the weight. The weight is never sampled at nodes.
    """
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    if isinstance(coeff, DiscreteEllipticOperator):
        local_op = coeff
    else:
        local_op = assemble_local_operator(ext_grid.grid, coeff)
    y = np.asarray(ext_grid.y_nodes, float)
    cell_w = cell_weight_integrals(y, s)
    cond = cell_conductances(y, s)
    if np.any(cell_w <= 0) or not np.all(np.isfinite(cell_w)) or not np.all(np.isfinite(cond)):
        raise AssemblyError("non-positive or non-finite weight integral")
    omega = nodal_weight_integrals(cell_w)
    Kx = sp.csr_matrix(local_op.stiffness)
    mx = np.asarray(local_op.masses, float)
    stiff = sp.kron(Kx, sp.diags(omega)) + sp.kron(sp.diags(mx), y_stiffness(cond))
    stiff = ((stiff + stiff.T) * 0.5).tocsr()
    masses = np.kron(mx, omega)
    return ExtensionOperator(
        stiff, masses, cell_w, omega, cond, y, local_op, float(s), mx.size, y.size
    )
