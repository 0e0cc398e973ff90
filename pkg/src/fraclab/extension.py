"""Degenerate extension problem in the (x, y) half-space.

Two independent routes produce the extension ``U`` of a trace ``u``:

* :func:`solve_extension_dirichlet` minimizes the discrete weighted Dirichlet
  energy on a graded mesh (sparse direct solve);
* :func:`poisson_extension` applies the Poisson symbol through the spectral
  decomposition of the x-operator.

Both are compared against ``2s * d_s * L^s u`` through the weighted Neumann
trace.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import (
    DiscreteEllipticOperator,
    assemble_extension_operator,
    cell_weight_integrals,
    conjugate_weight_antiderivative,
    trapezoid_weights,
)
from .exceptions import AssemblyError, ReflectionError
from .spectral import extension_constant, poisson_kernel_apply


def default_grading(s):
    """Grading exponent ``2 / (2 - 2s)`` clipped to ``[1, 3]``."""
    return float(np.clip(2.0 / (2.0 - 2.0 * s), 1.0, 3.0))


def default_height(decomp, tol=1e-8):
    """Height where the slowest non-constant mode ``exp(-sqrt(lam) y)`` drops below ``tol``."""
    return float(np.log(1.0 / tol) / np.sqrt(decomp.smallest_positive()))


def domain_diameter(grid, nodes):
    """Diagonal of the bounding box of the selected nodes."""
    pts = grid.coords[np.asarray(nodes, int)]
    return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


@dataclass(frozen=True)
class ExtensionGrid:
    """Spatial grid times graded y-nodes ``y_j = Ymax (j/J)^gamma``."""

    grid: object
    y_nodes: np.ndarray
    s: float
    gamma: float
    Ymax: float
    J: int

    @property
    def nx(self):
        return self.grid.size

    @property
    def ny(self):
        return self.y_nodes.size

    @property
    def cell_weights(self):
        """Exact ``int |y|^(1-2s)`` over each y-cell."""
        return cell_weight_integrals(self.y_nodes, self.s)


def build_extension_grid(grid, s, Ymax=None, J=256, gamma=None, decomp=None, omega_diameter=None):
    """Graded extension mesh.

    Parameters
    ----------
    grid : Grid
        Spatial grid shared with the local operator.
    s : float
        Fractional exponent, used for the default grading.
    Ymax : float, optional
        Truncation height (zero Dirichlet data are imposed there). When
        omitted, ``decomp`` must be given and :func:`default_height` is used.
    J : int
        Number of y-cells, at least 8.
    gamma : float, optional
        Grading exponent (``>= 1``); defaults to :func:`default_grading`.
    decomp : SpectralDecomposition, optional
        Used only for the default height.
    omega_diameter : float, optional
        Diameter of the interior domain; ``Ymax`` must exceed it.
    """
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    if Ymax is None:
        if decomp is None:
            raise ValueError("Ymax or a spectral decomposition is required")
        Ymax = default_height(decomp)
    if not Ymax > 0:
        raise ValueError("Ymax must be positive")
    if int(J) != J or J < 8:
        raise ValueError("need at least 8 y-cells")
    gamma = default_grading(s) if gamma is None else float(gamma)
    if gamma < 1:
        raise ValueError("grading exponent must be >= 1")
    if omega_diameter is not None and Ymax <= omega_diameter:
        raise ValueError(f"Ymax={Ymax} does not exceed the interior diameter {omega_diameter}")
    y = Ymax * (np.arange(int(J) + 1) / int(J)) ** gamma
    y.setflags(write=False)
    return ExtensionGrid(grid, y, float(s), gamma, float(Ymax), int(J))


@dataclass(frozen=True)
class ExtensionSolution:
    """Field ``U[i, j] = U(x_i, y_j)`` together with the operator it solves."""

    U: np.ndarray
    operator: object
    s: float
    residual: float = 0.0
    stability: float = float("nan")
    source: Optional[np.ndarray] = None
    neumann_patch: Optional[np.ndarray] = None

    @property
    def trace(self):
        return self.U[:, 0]

    @property
    def y_nodes(self):
        return self.operator.y_nodes


def _dual_lengths(y):
    d = np.diff(y)
    dual = np.zeros(y.size)
    dual[:-1] += 0.5 * d
    dual[1:] += 0.5 * d
    return dual


def source_load(ext_op, G):
    """Discrete ``int G . grad(Psi)`` for nodal vector data ``G`` of shape ``(nx, ny, n+1)``.

    Uses the same face pattern as the stiffness: y-components are averaged
    over each y-cell, x-components over each x-face times the dual y-length.
    """
    x_op = ext_op.x_operator
    nx, ny = ext_op.nx, ext_op.ny
    n = x_op.n
    G = np.asarray(G, float).reshape(nx, ny, n + 1)
    y = ext_op.y_nodes
    load = np.zeros((nx, ny))
    gy = 0.5 * (G[:, :-1, n] + G[:, 1:, n]) * x_op.masses[:, None]
    load[:, 1:] += gy
    load[:, :-1] -= gy
    dual = _dual_lengths(y)
    N = x_op.N
    w1 = trapezoid_weights(N, x_op.h)
    idx = np.indices((N,) * n).reshape(n, -1)
    for d in range(n):
        stride = N ** (n - 1 - d)
        trans = np.ones(nx)
        for e in range(n):
            if e != d:
                trans *= w1[idx[e]]
        left = np.flatnonzero(idx[d] < N - 1)
        right = left + stride
        gx = 0.5 * (G[left, :, d] + G[right, :, d]) * trans[left, None] * dual[None, :]
        np.add.at(load, right, gx)
        np.add.at(load, left, -gx)
    return load


def weighted_source_norm(ext_op, G):
    """Discrete ``|| y^(2s-1) G ||`` in ``L^2(y^(1-2s))``, i.e. ``(int y^(2s-1) |G|^2)^(1/2)``."""
    x_op = ext_op.x_operator
    G = np.asarray(G, float).reshape(ext_op.nx, ext_op.ny, -1)
    y = ext_op.y_nodes
    mid = 0.5 * (y[:-1] + y[1:])
    edges = np.concatenate([[y[0]], mid, [y[-1]]])
    conj = np.diff(conjugate_weight_antiderivative(edges, ext_op.s))
    dens = np.sum(G**2, axis=2)
    return float(np.sqrt(np.sum(x_op.masses[:, None] * conj[None, :] * dens)))


def weighted_norm(ext_op, U):
    """Discrete ``H^1(y^(1-2s))`` norm: weighted energy plus weighted ``L^2``."""
    u = np.ravel(U)
    return float(np.sqrt(ext_op.energy(u) + np.sum(ext_op.masses * u * u)))


def solve_extension_dirichlet(ext_op, trace_datum, source_G=None, neumann_patch=None):
    """Minimize the discrete weighted Dirichlet energy with prescribed trace.

    ``U(., 0)`` equals ``trace_datum`` except on ``neumann_patch`` (a boolean
    mask over x-nodes), where the trace is left free so the weighted co-normal
    flux vanishes there. ``U`` is zero at ``y = Ymax``. The optional source is
    a nodal vector field ``G`` of shape ``(nx, ny, n+1)`` entering the energy
    as ``1/2 int w A grad U . grad U + int G . grad U``.

    The recorded ``stability`` is ``||U||_w / (||y^(2s-1) G||_w + ||datum||_M)``.
    """
    nx, ny = ext_op.nx, ext_op.ny
    datum = np.asarray(trace_datum, float)
    if datum.shape != (nx,):
        raise ValueError("trace datum does not match the x-grid")
    patch = None if neumann_patch is None else np.asarray(neumann_patch, bool)
    fixed = np.zeros((nx, ny), dtype=bool)
    fixed[:, 0] = True
    fixed[:, -1] = True
    values = np.zeros((nx, ny))
    values[:, 0] = datum
    if patch is not None:
        fixed[patch, 0] = False
        values[patch, 0] = 0.0
    fixed_f = fixed.ravel()
    free = ~fixed_f
    K = ext_op.stiffness
    Kfree = K[free]
    Kff = Kfree[:, free].tocsc()
    rhs = -(Kfree[:, fixed_f] @ values.ravel()[fixed_f])
    if source_G is not None:
        rhs = rhs - source_load(ext_op, source_G).ravel()[free]
    U = values.ravel().copy()
    res = 0.0
    if free.any():
        lu = spla.splu(Kff)
        sol = lu.solve(rhs)
        sol = sol + lu.solve(rhs - Kff @ sol)
        rnorm = np.linalg.norm(rhs)
        res = float(np.linalg.norm(rhs - Kff @ sol) / rnorm) if rnorm > 0 else 0.0
        U[free] = sol
    U = U.reshape(nx, ny)
    if not np.all(np.isfinite(U)):
        raise AssemblyError("extension system is singular")
    mx = ext_op.x_operator.masses
    denom = float(np.sqrt(np.sum(mx * datum * datum)))
    if source_G is not None:
        denom += weighted_source_norm(ext_op, source_G)
    stab = weighted_norm(ext_op, U) / denom if denom > 0 else 0.0
    return ExtensionSolution(U, ext_op, ext_op.s, res, stab, source_G, patch)


def poisson_extension(decomp, s, y_nodes, trace_datum, method="quadrature"):
    """Spectral extension ``U(., y_j)`` at every y-node (``y = 0`` returns the trace)."""
    datum = np.asarray(trace_datum, float)
    cols = [
        datum.copy() if y == 0 else poisson_kernel_apply(decomp, s, y, datum, method=method)
        for y in np.asarray(y_nodes, float)
    ]
    return np.column_stack(cols)


def neumann_trace(solution):
    """Two estimators of ``lim y^(1-2s) dU/dy`` at ``y = 0``.

    Returns ``(difference_quotient, weak_form)``:

    * ``2s (U(., y_1) - U(., 0)) / y_1^(2s)``;
    * ``-(K U)_(i, 0) / m_i``: first-cell weighted flux minus the x-operator
      acting on the lumped weight of the half-cell next to ``y = 0``.

    Both approximate ``2s * d_s * L^s u`` with ``d_s < 0``.
    """
    U = solution.U
    op = solution.operator
    s = solution.s
    y = op.y_nodes
    est_a = 2.0 * s * (U[:, 1] - U[:, 0]) / y[1] ** (2.0 * s)
    KU = (op.stiffness @ U.ravel()).reshape(U.shape)
    est_b = -KU[:, 0] / op.x_operator.masses
    return est_a, est_b


def trace_target(fractional_op, u):
    """Oracle ``2s d_s L^s u`` for the Neumann trace."""
    s = fractional_op.s
    return 2.0 * s * extension_constant(s) * (fractional_op.matrix @ np.asarray(u, float))


# --------------------------------------------------------------------------
# reflections


@dataclass(frozen=True)
class ReflectedField:
    """Even reflection ``U~(x, -y) = U(x, y)`` on the mirrored node set."""

    values: np.ndarray
    y_nodes: np.ndarray
    s: float
    residual: float
    patch: np.ndarray
    x_operator: DiscreteEllipticOperator


@dataclass(frozen=True)
class ConjugateField:
    """Cell-centred ``W ~ |y|^(1-2s) dU/dy`` on the mirrored cells."""

    values: np.ndarray
    y_cells: np.ndarray
    s: float
    residual: float
    parity: str = "odd"


@dataclass(frozen=True)
class _MirrorMesh:
    y_nodes: np.ndarray


def conjugate_values(solution):
    """``W_j = c_j (U_{j+1} - U_j)`` with the flux-exact y-conductances."""
    return solution.operator.conductances[None, :] * np.diff(solution.U, axis=1)


def _relative(residual, scale):
    r = float(np.max(np.abs(residual), initial=0.0))
    s = float(np.max(np.abs(scale), initial=0.0))
    return r / s if s > 0 else r


def conjugate_residual(op, W):
    """Relative residual of the discrete conjugate equation.

    With ``W_j = c_j (U_{j+1} - U_j)`` the node equations of ``U`` give
    ``(W_{j+1}-W_j)/omega_{j+1} - (W_j-W_{j-1})/omega_j = L_x W_j / c_j``,
    a flux-form discretization of ``div(y^(2s-1) diag(A,1) grad W) = 0``
    with conductances ``1/omega`` and cell masses ``1/c``. Checked on cells
    ``1 .. J-2``, away from ``y = 0`` and the top.
    """
    Lx = op.x_operator.matrix
    omega = op.nodal_weights
    c = op.conductances
    js = np.arange(1, c.size - 1)
    if js.size == 0:
        return 0.0
    up = (W[:, js + 1] - W[:, js]) / omega[js + 1]
    down = (W[:, js] - W[:, js - 1]) / omega[js]
    lw = (Lx @ W[:, js]) / c[js]
    scale = np.abs(up) + np.abs(down) + (np.abs(Lx) @ np.abs(W[:, js])) / c[js]
    return _relative(up - down - lw, scale)


def reflect_and_conjugate(solution, patch=None, threshold=1e-8, diagnostic=False):
    """Even-reflect ``U`` across ``y = 0`` and odd-reflect its conjugate field.

    Parameters
    ----------
    solution : ExtensionSolution
    patch : array of bool, optional
        x-nodes where the reflected equation is checked across ``y = 0``.
        Defaults to the solution's Neumann patch, or no node.
    threshold : float
        Largest admissible weighted Neumann trace on the patch, relative to
        the largest trace anywhere.
    diagnostic : bool
        Skip the trace check (full-trace reflection for inspection).

    Returns
    -------
    (ReflectedField, ConjugateField)

    Raises
    ------
    ReflectionError
        If the Neumann trace on the patch exceeds ``threshold``.
    """
    op = solution.operator
    s = solution.s
    U = solution.U
    nx, ny = U.shape
    if patch is None:
        patch = solution.neumann_patch if solution.neumann_patch is not None else np.zeros(nx, bool)
    patch = np.asarray(patch, bool)

    _, flux = neumann_trace(solution)
    on_patch = float(np.max(np.abs(flux[patch]), initial=0.0))
    scale = float(np.max(np.abs(flux), initial=0.0))
    if not diagnostic and patch.any() and on_patch > threshold * max(scale, 1e-300):
        raise ReflectionError(
            f"Neumann trace on the patch is {on_patch:.3e} (largest {scale:.3e}); "
            "the even reflection is not a solution there"
        )

    y = op.y_nodes
    y_full = np.concatenate([-y[:0:-1], y])
    U_even = np.concatenate([U[:, :0:-1], U], axis=1)
    mirrored = assemble_extension_operator(_MirrorMesh(y_full), op.x_operator, s)
    r = (mirrored.stiffness @ U_even.ravel()).reshape(U_even.shape)
    terms = (abs(mirrored.stiffness) @ np.abs(U_even.ravel())).reshape(U_even.shape)
    rows = np.zeros(U_even.shape, dtype=bool)
    rows[:, 1:-1] = True
    rows[:, ny - 1] = patch
    even_res = _relative(r[rows], terms[rows])

    W = conjugate_values(solution)
    W_odd = np.concatenate([-W[:, ::-1], W], axis=1)
    mid = 0.5 * (y[:-1] + y[1:])
    y_cells = np.concatenate([-mid[::-1], mid])
    even = ReflectedField(U_even, y_full, s, even_res, patch, op.x_operator)
    conj = ConjugateField(W_odd, y_cells, s, conjugate_residual(op, W))
    return even, conj
