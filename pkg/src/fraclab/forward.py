"""Nonlocal exterior-value problem for ``L^s + q``.

The operator argument ``S`` is always a :class:`~fraclab.spectral.FractionalOperator`.
Its symmetric stiffness ``M S`` is what every routine works with, so the
interior system, the DN pairing and the bilinear form share one symmetric
matrix and their identities hold to round-off.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .exceptions import NearSingular

CONDITION_LIMIT = 1e14


@dataclass(frozen=True)
class Potential:
    """Potential values on the interior nodes, zero elsewhere."""

    values: np.ndarray
    interior: np.ndarray
    size: int

    @property
    def full(self):
        out = np.zeros(self.size)
        out[self.interior] = self.values
        return out

    @property
    def sup_norm(self):
        return float(np.max(np.abs(self.values), initial=0.0))


def as_potential(q, partition):
    """Coerce ``q`` (scalar, interior vector, full vector or Potential) to a Potential."""
    if isinstance(q, Potential):
        return q
    ni = partition.interior.size
    if q is None:
        vals = np.zeros(ni)
    else:
        arr = np.asarray(q, float)
        if arr.ndim == 0:
            vals = np.full(ni, float(arr))
        elif arr.shape == (ni,):
            vals = arr.copy()
        elif arr.shape == (partition.size,):
            vals = arr[partition.interior].copy()
        else:
            raise ValueError(f"potential of shape {arr.shape} matches neither Omega nor the grid")
    if not np.all(np.isfinite(vals)):
        raise ValueError("potential has non-finite values")
    vals.setflags(write=False)
    return Potential(vals, partition.interior, partition.size)


def _exterior_datum(g, partition):
    g = np.asarray(g, float)
    ne = partition.exterior.size
    if g.shape[0] == ne:
        return g
    if g.shape[0] == partition.size:
        return g[partition.exterior]
    raise ValueError("exterior datum matches neither the exterior nor the grid")


def bilinear_form(S, q, v, w, partition=None):
    """``B_q(v, w) = <S v, w>_M + sum_Omega q v w m``.

    ``q`` is a Potential or a full-grid vector (zero off the interior); a
    partition is needed only for interior-length vectors.
    """
    if isinstance(q, Potential):
        qf = q.full
    elif partition is not None:
        qf = as_potential(q, partition).full
    else:
        qf = np.broadcast_to(np.asarray(q, float), S.masses.shape)
    v = np.asarray(v, float)
    w = np.asarray(w, float)
    return float(w @ (S.stiffness @ v)) + float(np.sum(qf * v * w * S.masses))


@dataclass(frozen=True)
class ForwardSolution:
    """Full-grid solution ``u`` equal to the datum on the exterior."""

    u: np.ndarray
    g: np.ndarray
    residual: float
    source: np.ndarray = field(default=None)


@dataclass(frozen=True)
class EigenvalueReport:
    """Lowest generalized eigenvalues of ``((S + Q)_OO, M_OO)``."""

    eigenvalues: np.ndarray
    zero_is_eigenvalue: bool
    tol: float
    lambda_max: float


class DirichletSolver:
    """Factorized interior system ``(M S + Q M)_OO`` for repeated solves.

    Raises
    ------
    NearSingular
        If the symmetric scaled block has condition number above 1e14, i.e.
        zero is (numerically) a Dirichlet eigenvalue of ``L^s + q``.
    """

    def __init__(self, S, q, partition, check_condition=True):
        self.S = S
        self.partition = partition
        self.q = as_potential(q, partition)
        I = partition.interior
        m = S.masses
        self.block = S.stiffness[np.ix_(I, I)] + np.diag(self.q.values * m[I])
        self.coupling = S.stiffness[np.ix_(I, partition.exterior)]
        self.condition = None
        if check_condition:
            ev = _scaled_block_eigenvalues(S, self.q, partition)
            amin = np.min(np.abs(ev))
            cond = np.inf if amin == 0 else float(np.max(np.abs(ev)) / amin)
            self.condition = cond
            if cond > CONDITION_LIMIT:
                raise NearSingular(
                    f"interior system condition {cond:.3e} exceeds {CONDITION_LIMIT:.0e}; "
                    "zero is a Dirichlet eigenvalue",
                    condition=cond,
                )
        self._lu = sla.lu_factor(self.block)

    def _solve(self, rhs):
        x = sla.lu_solve(self._lu, rhs)
        return x + sla.lu_solve(self._lu, rhs - self.block @ x)

    def solve_interior(self, g_ext, f_source=None):
        """Interior values for exterior data (vector or columns) and an optional source."""
        g_ext = np.asarray(g_ext, float)
        rhs = -(self.coupling @ g_ext)
        if f_source is not None:
            mI = self.S.masses[self.partition.interior]
            f = np.asarray(f_source, float)
            rhs = rhs + (mI * f if f.ndim == 1 else mI[:, None] * f)
        x = self._solve(rhs)
        return x, rhs

    def solve(self, g, f_source=None):
        g_ext = _exterior_datum(g, self.partition)
        x, rhs = self.solve_interior(g_ext, f_source)
        u = np.zeros(self.partition.size)
        u[self.partition.exterior] = g_ext
        u[self.partition.interior] = x
        rn = np.linalg.norm(rhs)
        res = float(np.linalg.norm(rhs - self.block @ x) / rn) if rn > 0 else 0.0
        return ForwardSolution(u, g_ext.copy(), res, None if f_source is None else np.asarray(f_source, float))

    def solve_columns(self, G_ext):
        """Full-grid solutions for each column of exterior data."""
        G_ext = np.asarray(G_ext, float)
        X, _ = self.solve_interior(G_ext)
        U = np.zeros((self.partition.size, G_ext.shape[1]))
        U[self.partition.exterior] = G_ext
        U[self.partition.interior] = X
        return U


def _scaled_block_eigenvalues(S, q, partition):
    I = partition.interior
    isq = 1.0 / np.sqrt(S.masses[I])
    B = S.stiffness[np.ix_(I, I)] * isq[:, None] * isq[None, :]
    B = 0.5 * (B + B.T) + np.diag(q.values)
    return sla.eigvalsh(B)


def solve_dirichlet(S, q, partition, g, f_source=None):
    """Solve ``(L^s + q) u = f`` in Omega with ``u = g`` on the exterior."""
    return DirichletSolver(S, q, partition).solve(g, f_source)


def eigenvalue_report(S, q, partition, tol=None, count=10):
    """Lowest ``count`` eigenvalues of the interior pencil and the zero test.

    ``tol`` defaults to ``1e-8 * lambda_max`` of the pencil.
    """
    ev = _scaled_block_eigenvalues(S, as_potential(q, partition), partition)
    lam_max = float(np.max(np.abs(ev)))
    tol = 1e-8 * lam_max if tol is None else float(tol)
    low = ev[:count].copy()
    low.setflags(write=False)
    return EigenvalueReport(low, bool(np.min(np.abs(ev)) < tol), tol, lam_max)


# --------------------------------------------------------------------------
# DN map


@dataclass(frozen=True)
class DNMap:
    """Exterior-to-exterior map ``g -> (L^s u_g)|_Oe``.

    ``pairing_matrix`` is ``M_e Lambda`` (symmetric); ``bilinear_matrix`` the
    same quantity computed as ``B_q(u_g, u_h)`` over basis data.
    """

    matrix: np.ndarray
    pairing_matrix: np.ndarray
    bilinear_matrix: np.ndarray
    exterior_masses: np.ndarray
    s: float
    q: Potential
    solutions: np.ndarray

    def apply(self, g):
        return self.matrix @ np.asarray(g, float)

    def pair(self, g, h):
        """``<Lambda g, h> = sum_e (Lambda g)_i h_i m_i``."""
        return float(np.sum(self.apply(g) * np.asarray(h, float) * self.exterior_masses))

    @property
    def representation_gap(self):
        """Relative difference between the flux and bilinear-form constructions."""
        P, B = self.pairing_matrix, self.bilinear_matrix
        return float(np.linalg.norm(P - B) / max(np.linalg.norm(P), 1e-300))

    def symmetry_defect(self):
        P = self.pairing_matrix
        return float(np.linalg.norm(P - P.T) / max(np.linalg.norm(P), 1e-300))


def assemble_dn_map(S, q, partition, solver=None):
    """DN map column by column from exterior basis data.

    Column ``e`` is ``(S u_e)|_Oe`` where ``u_e`` solves the homogeneous
    problem with the basis vector as datum. The bilinear-form construction
    ``B_q(u_e, u_f)`` is computed alongside.
    """
    solver = DirichletSolver(S, q, partition) if solver is None else solver
    E = partition.exterior
    ne = E.size
    U = solver.solve_columns(np.eye(ne))
    flux = S.stiffness[E] @ U
    me = S.masses[E]
    qm = solver.q.full * S.masses
    bil = U.T @ (S.stiffness @ U) + U.T @ (qm[:, None] * U)
    matrix = flux / me[:, None]
    for a in (matrix, flux, bil, U):
        a.setflags(write=False)
    return DNMap(matrix, flux, bil, me, S.s, solver.q, U)


@dataclass(frozen=True)
class NeumannRepresentation:
    """Pieces of ``Lambda g = (N_s u - m_O g + S E_0 g)|_Oe``."""

    neumann: np.ndarray
    weight: np.ndarray
    zero_extension: np.ndarray
    dn: np.ndarray


def neumann_weight(S, partition):
    """``m_O(i) = sum_{j in O} K_ij m_j`` on exterior nodes."""
    I, E = partition.interior, partition.exterior
    return S.kernel[np.ix_(E, I)] @ S.masses[I]


def neumann_operator(S, partition, u):
    """``(N_s u)_i = sum_{j in O} K_ij (u_i - u_j) m_j`` on exterior nodes."""
    I, E = partition.interior, partition.exterior
    KEI = S.kernel[np.ix_(E, I)] * S.masses[I][None, :]
    u = np.asarray(u, float)
    return KEI.sum(axis=1) * u[E] - KEI @ u[I]


def dn_via_neumann(S, partition, solution, g=None):
    """DN action through the nonlocal Neumann operator.

    ``S`` supplies the extracted kernel and the matrix for ``S E_0 g``.
    Returns a :class:`NeumannRepresentation`; its ``dn`` field is the
    exterior vector.
    """
    E = partition.exterior
    g_ext = solution.g if g is None else _exterior_datum(g, partition)
    ns = neumann_operator(S, partition, solution.u)
    w = neumann_weight(S, partition)
    E0g = np.zeros(partition.size)
    E0g[E] = g_ext
    zero_ext = (S.matrix @ E0g)[E]
    return NeumannRepresentation(ns, w, zero_ext, ns - w * g_ext + zero_ext)


def dn_flux(S, partition, solution):
    """Direct ``(S u)|_Oe``."""
    return (S.matrix @ solution.u)[partition.exterior]


def integral_identity_terms(S, q1, q2, partition, g1, g2):
    """Both sides of ``<(Lambda_1 - Lambda_2) g1, g2> = sum_O (q1 - q2) u1 u2 m``.

    The left side uses the symmetry of ``Lambda_2`` so only ``u1`` (potential
    q1, datum g1) and ``u2`` (potential q2, datum g2) are needed. Returns
    ``(lhs, rhs, scale)``.
    """
    p1 = as_potential(q1, partition)
    p2 = as_potential(q2, partition)
    E, I = partition.exterior, partition.interior
    me = S.masses[E]
    u1 = solve_dirichlet(S, p1, partition, g1).u
    u2 = solve_dirichlet(S, p2, partition, g2).u
    lam1g1 = (S.matrix @ u1)[E]
    lam2g2 = (S.matrix @ u2)[E]
    a = float(np.sum(lam1g1 * u2[E] * me))
    b = float(np.sum(lam2g2 * u1[E] * me))
    terms = (p1.values - p2.values) * u1[I] * u2[I] * S.masses[I]
    rhs = float(np.sum(terms))
    scale = max(abs(a), abs(b), float(np.sum(np.abs(terms))), 1e-300)
    return a - b, rhs, scale


def integral_identity_residual(S, q1, q2, partition, g1, g2):
    """Relative residual of the integral identity."""
    lhs, rhs, scale = integral_identity_terms(S, q1, q2, partition, g1, g2)
    return abs(lhs - rhs) / scale


def solution_bound(solution, masses, partition):
    """``||u||_M / (||g||_{M,Oe} + ||f||_{M,O})``."""
    E, I = partition.exterior, partition.interior
    den = float(np.sqrt(np.sum(masses[E] * solution.g**2)))
    if solution.source is not None:
        den += float(np.sqrt(np.sum(masses[I] * solution.source**2)))
    num = float(np.sqrt(np.sum(masses * solution.u**2)))
    return num / den if den > 0 else 0.0
