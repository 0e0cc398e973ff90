"""Runge approximation, moment extraction and potential reconstruction."""
from __future__ import annotations

from dataclasses import dataclass, field
import warnings

import numpy as np
import scipy.linalg as sla
from scipy.interpolate import RegularGridInterpolator

from .exceptions import IllConditionedWarning, NonDecreasingMisfit
from .forward import DirichletSolver, as_potential, assemble_dn_map
from .grid import select_nodes

GRAM_CONDITION_LIMIT = 1e14


def poisson_operator(S, q, partition, f_ext, solver=None):
    """``P_q f``: full-grid solution of the homogeneous problem with exterior datum ``f``."""
    solver = DirichletSolver(S, q, partition) if solver is None else solver
    return solver.solve(f_ext).u


def _control_nodes(partition, O, grid=None):
    """Resolve ``O`` (name, indices, mask or region) to grid indices inside the exterior."""
    if isinstance(O, str):
        nodes = np.asarray(getattr(partition, O))
    elif grid is not None and not isinstance(O, np.ndarray) and not isinstance(O, (list, tuple)):
        nodes = select_nodes(grid, O)
    else:
        arr = np.asarray(O)
        nodes = np.flatnonzero(arr) if arr.dtype == bool else np.unique(arr.astype(int))
    if nodes.size == 0:
        raise ValueError("control region is empty")
    if np.intersect1d(nodes, partition.interior).size:
        raise ValueError("control region meets Omega")
    return nodes


@dataclass(frozen=True)
class RungeResult:
    """Tikhonov control on ``O`` and the interior trace it produces."""

    control: np.ndarray
    exterior_datum: np.ndarray
    trace: np.ndarray
    error: float
    relative_error: float
    alpha: float
    gram_condition: float
    nodes: np.ndarray


class RungeProblem:
    """Interior-trace map ``f -> r_O P_q f`` for controls supported on ``O``.

    Minimizers of ``||r P_q f - t||^2_{M,O} + alpha ||f||^2_{M,O}`` are
    computed from one SVD of the mass-scaled map, which solves the normal
    equations ``(R^T M R + alpha M_O) f = R^T M t`` without forming them.
    """

    def __init__(self, S, q, partition, O, solver=None):
        self.S = S
        self.partition = partition
        self.solver = DirichletSolver(S, q, partition) if solver is None else solver
        self.nodes = _control_nodes(partition, O)
        lookup = np.full(partition.size, -1)
        lookup[partition.exterior] = np.arange(partition.exterior.size)
        self.positions = lookup[self.nodes]
        data = np.zeros((partition.exterior.size, self.nodes.size))
        data[self.positions, np.arange(self.nodes.size)] = 1.0
        self.R, _ = self.solver.solve_interior(data)
        m = S.masses
        self.m_in = m[partition.interior]
        self.m_ctrl = m[self.nodes]
        scaled = np.sqrt(self.m_in)[:, None] * self.R / np.sqrt(self.m_ctrl)[None, :]
        self.U, self.sigma, self.Vt = sla.svd(scaled, full_matrices=False, lapack_driver="gesvd")

    def gram_condition(self, alpha):
        s2 = self.sigma**2
        smin = s2.min() if self.R.shape[0] >= self.R.shape[1] else 0.0
        return float((s2.max() + alpha) / (smin + alpha))

    def solve(self, target, alpha):
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        t = np.asarray(target, float)
        ts = np.sqrt(self.m_in) * t
        coef = self.sigma / (self.sigma**2 + alpha) * (self.U.T @ ts)
        f = (self.Vt.T @ coef) / np.sqrt(self.m_ctrl)
        cond = self.gram_condition(alpha)
        if cond > GRAM_CONDITION_LIMIT:
            warnings.warn(
                f"Runge normal equations have condition {cond:.2e} at alpha={alpha:g}",
                IllConditionedWarning,
                stacklevel=2,
            )
        trace = self.R @ f
        err = float(np.sqrt(np.sum(self.m_in * (trace - t) ** 2)))
        tnorm = float(np.sqrt(np.sum(self.m_in * t * t)))
        g = np.zeros(self.partition.exterior.size)
        g[self.positions] = f
        return RungeResult(f, g, trace, err, err / tnorm if tnorm > 0 else err, float(alpha), cond, self.nodes)


def runge_approximate(S, q, partition, O, target, alpha):
    """Tikhonov Runge approximation of ``target`` on Omega by controls on ``O``."""
    return RungeProblem(S, q, partition, O).solve(target, alpha)


def runge_sweep(problem, target, alphas):
    """Results for a sequence of regularization parameters."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllConditionedWarning)
        return [problem.solve(target, a) for a in alphas]


# --------------------------------------------------------------------------
# moments


def default_probes(grid, partition, count=4):
    """Indicator bumps on ``count`` slabs of Omega along the first axis, unit M-norm."""
    I = partition.interior
    x = grid.coords[I, 0]
    edges = np.linspace(x.min(), x.max(), count + 1)
    edges[-1] = np.inf
    m = grid.masses[I]
    probes = []
    for k in range(count):
        f = ((x >= edges[k]) & (x < edges[k + 1])).astype(float)
        probes.append(f / np.sqrt(np.sum(m * f * f)))
    return np.array(probes)


@dataclass(frozen=True)
class MomentSet:
    """Extracted moments with their error budgets.

    ``moments[k] = <(Lambda_1 - Lambda_2) g1_k, g2>``;
    ``identity_values[k] = sum_O (q1 - q2) u1_k u2 m`` for the controls used;
    ``targets[k] = sum_O (q1 - q2) f_k m``; ``budgets[k]`` bounds
    ``|identity_values[k] - targets[k]|`` by the Runge errors.
    """

    probes: np.ndarray
    moments: np.ndarray
    identity_values: np.ndarray
    targets: np.ndarray
    budgets: np.ndarray
    runge_errors_1: np.ndarray
    runge_error_2: float
    controls_1: np.ndarray
    control_2: np.ndarray
    mode: str
    scale: float = field(default=1.0)


def extract_moments(S, partition, q1, q2, probes, alpha, O1="O1", O2="O2", mode="exact", q_ref=0.0):
    """Moments ``int (q1 - q2) f_k`` through the integral identity.

    ``mode="exact"`` builds the ``g1`` controls with ``q1`` and ``g2`` with
    ``q2``; ``mode="born"`` builds both with ``q_ref`` (the unknown-potential
    setting), which makes the moment a first-order approximation.
    """
    p1 = as_potential(q1, partition)
    p2 = as_potential(q2, partition)
    if mode == "exact":
        c1, c2 = p1, p2
    elif mode == "born":
        c1 = c2 = as_potential(q_ref, partition)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    s1 = DirichletSolver(S, p1, partition)
    s2 = s1 if np.array_equal(p1.values, p2.values) else DirichletSolver(S, p2, partition)
    r1 = RungeProblem(S, c1, partition, O1, solver=s1 if c1 is p1 else None)
    r2 = RungeProblem(S, c2, partition, O2, solver=s2 if c2 is p2 else None)
    I, E = partition.interior, partition.exterior
    m = S.masses
    me, mi = m[E], m[I]
    ones = np.ones(I.size)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllConditionedWarning)
        res2 = r2.solve(ones, alpha)
    g2 = res2.exterior_datum
    u2 = s2.solve(g2).u
    lam2g2 = (S.matrix @ u2)[E]
    dq = p1.values - p2.values
    probes = np.atleast_2d(np.asarray(probes, float))
    K = probes.shape[0]
    mom = np.zeros(K)
    ident = np.zeros(K)
    targ = np.zeros(K)
    budget = np.zeros(K)
    err1 = np.zeros(K)
    controls = np.zeros((K, E.size))
    u2_norm = float(np.sqrt(np.sum(mi * u2[I] ** 2)))
    dq_inf = float(np.max(np.abs(dq), initial=0.0))
    scale = 0.0
    for k, f in enumerate(probes):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IllConditionedWarning)
            res1 = r1.solve(f, alpha)
        g1 = res1.exterior_datum
        u1 = s1.solve(g1).u
        a = float(np.sum((S.matrix @ u1)[E] * g2 * me))
        b = float(np.sum(lam2g2 * g1 * me))
        mom[k] = a - b
        scale = max(scale, abs(a), abs(b))
        ident[k] = float(np.sum(dq * u1[I] * u2[I] * mi))
        targ[k] = float(np.sum(dq * f * mi))
        fn = float(np.sqrt(np.sum(mi * f * f)))
        e1 = float(np.sqrt(np.sum(mi * (u1[I] - f) ** 2)))
        budget[k] = dq_inf * (e1 * u2_norm + fn * res2.error)
        err1[k] = res1.relative_error
        controls[k] = g1
    return MomentSet(
        probes, mom, ident, targ, budget, err1, res2.relative_error, controls, g2, mode, max(scale, 1e-300)
    )


# --------------------------------------------------------------------------
# reconstruction


def _pairing(dn):
    return np.asarray(dn.pairing_matrix if hasattr(dn, "pairing_matrix") else dn, float)


def misfit_matrix(P, P_obs, me):
    """Mass-weighted residual ``M_e^{-1/2} (P - P_obs) M_e^{-1/2}`` (``P = M_e Lambda``)."""
    isq = 1.0 / np.sqrt(me)
    return (P - P_obs) * isq[:, None] * isq[None, :]


def jacobian(S, q, partition, dn=None, block=None):
    """Derivative of the scaled pairing matrix with respect to interior ``q_i``.

    From the integral identity ``d(M_e Lambda)_ab / dq_i = m_i U_ia U_ib``,
    with ``U`` the interior solutions for exterior basis data. Returns an
    array of shape ``(|Oe|^2, |O|)`` acting on the flattened residual, or
    ``(len(rows) * len(cols), |O|)`` for a measurement ``block``.
    """
    dn = assemble_dn_map(S, q, partition) if dn is None else dn
    I, E = partition.interior, partition.exterior
    UI = dn.solutions[I]
    isq = 1.0 / np.sqrt(S.masses[E])
    UIs = UI * isq[None, :]
    mi = S.masses[I]
    if block is None:
        rows = cols = np.arange(E.size)
    else:
        rows, cols = block
    J = np.einsum("ia,ib->abi", UIs[:, rows], UIs[:, cols]) * mi[None, None, :]
    return J.reshape(len(rows) * len(cols), I.size)


def jacobian_fd_check(S, q, partition, nodes, eps=1e-6):
    """Relative difference between central differences and :func:`jacobian` columns."""
    p = as_potential(q, partition)
    J = jacobian(S, p, partition)
    me = S.masses[partition.exterior]
    out = []
    for i in nodes:
        dq = np.zeros(p.values.size)
        dq[i] = eps
        Pp = assemble_dn_map(S, p.values + dq, partition).pairing_matrix
        Pm = assemble_dn_map(S, p.values - dq, partition).pairing_matrix
        fd = misfit_matrix(Pp, Pm, me).ravel() / (2 * eps)
        col = J[:, i]
        out.append(float(np.linalg.norm(fd - col) / max(np.linalg.norm(col), 1e-300)))
    return np.array(out)


@dataclass(frozen=True)
class ReconstructionResult:
    """Recovered interior potential and iteration history."""

    q: np.ndarray
    objective_history: np.ndarray
    misfit_history: np.ndarray
    gradient_history: np.ndarray
    alpha: float
    iterations: int
    converged: bool
    backtracking_failed: bool
    stop_reason: str = "max_iter"


def _block(A, block):
    if block is None:
        return A
    rows, cols = block
    return A[np.ix_(rows, cols)]


def measurement_block(partition, rows="O2", cols="O1"):
    """Exterior positions for partial data: inputs on ``cols``, measurements on ``rows``."""
    return partition.exterior_positions(rows), partition.exterior_positions(cols)


def _objective(S, q, partition, P_obs, q_init, alpha, me, mi, block=None):
    dn = assemble_dn_map(S, q, partition)
    R = _block(misfit_matrix(dn.pairing_matrix, P_obs, me), block)
    d = q - q_init
    misfit = float(np.sum(R * R))
    return misfit + alpha * float(np.sum(mi * d * d)), misfit, R, dn


def reconstruct_potential(S, partition, dn_obs, q_init=0.0, alpha_q=0.0, max_iter=25, gtol=1e-8,
                          armijo=1e-4, max_backtracks=30, damping=1e-2, block=None):
    """Damped Gauss-Newton reconstruction of ``q`` from exterior DN data.

    Minimizes ``F(q) = ||Lambda_q - Lambda_obs||^2 + alpha ||q - q_init||^2_M``
    where the first norm is the mass-weighted Frobenius norm of the pairing
    matrices. Each step solves ``(H + lam d I) dq = -grad/2`` with the
    Gauss-Newton matrix ``H``, ``d`` its mean diagonal and ``lam`` a
    Levenberg-Marquardt damping that backtracks (``lam *= 10``) until the
    Armijo condition holds and relaxes (``lam *= 0.3``) after every accepted
    step. Stops once the gradient norm drops below ``gtol`` times its initial
    value. A failed backtracking emits :class:`NonDecreasingMisfit` and ends
    the iteration. With ``alpha_q > 0`` a step can lower ``F`` while raising
    the data misfit (the penalty shrinks); such a step is not taken and the
    iteration stops with ``stop_reason="misfit"``, which keeps the misfit
    history nonincreasing. ``block = (rows, cols)`` of exterior positions restricts
    the misfit to partial data (see :func:`measurement_block`).
    """
    P_obs = _pairing(dn_obs)
    I, E = partition.interior, partition.exterior
    me, mi = S.masses[E], S.masses[I]
    q0 = as_potential(q_init, partition).values.copy()
    q = q0.copy()
    F, mis, R, dn = _objective(S, q, partition, P_obs, q0, alpha_q, me, mi, block)
    obj, misf, grads = [F], [np.sqrt(mis)], []
    g0 = None
    converged = failed = False
    reason = "max_iter"
    lam = float(damping)
    it = 0
    for it in range(max_iter + 1):
        J = jacobian(S, q, partition, dn, block)
        grad = 2.0 * (J.T @ R.ravel() + alpha_q * mi * (q - q0))
        gnorm = float(np.linalg.norm(grad))
        grads.append(gnorm)
        if g0 is None:
            g0 = gnorm
        if gnorm <= gtol * g0 or gnorm == 0.0:
            converged = True
            reason = "gradient"
            break
        if it == max_iter:
            break
        H = J.T @ J + alpha_q * np.diag(mi)
        scale = float(np.mean(np.diag(H)))
        accepted = False
        for _ in range(max_backtracks):
            step = -sla.solve(H + lam * scale * np.eye(H.shape[0]), 0.5 * grad, assume_a="pos")
            Fn, misn, Rn, dnn = _objective(S, q + step, partition, P_obs, q0, alpha_q, me, mi, block)
            if Fn <= F + armijo * float(grad @ step):
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            warnings.warn("line search failed to reduce the misfit", NonDecreasingMisfit, stacklevel=2)
            failed = True
            reason = "line_search"
            break
        if misn > mis:
            reason = "misfit"
            break
        q = q + step
        F, mis, R, dn = Fn, misn, Rn, dnn
        lam = max(0.3 * lam, 1e-12)
        obj.append(F)
        misf.append(np.sqrt(misn))
    return ReconstructionResult(
        q, np.array(obj), np.array(misf), np.array(grads), float(alpha_q), it, converged, failed, reason
    )


def add_multiplicative_noise(dn, level, rng):
    """``P_obs = P (1 + level * xi)`` entrywise with standard normal ``xi``."""
    P = _pairing(dn)
    return P * (1.0 + level * rng.standard_normal(P.shape))


def discrepancy_alpha(S, partition, P_obs, delta, alphas, q_init=0.0, tau=1.0, max_iter=25, block=None):
    """Largest ``alpha`` whose reconstruction misfit is within ``tau * delta``.

    ``alphas`` are tried in decreasing order; the last one is returned when
    none satisfies the principle. Returns ``(alpha, result)``.
    """
    best = None
    for a in sorted(alphas, reverse=True):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonDecreasingMisfit)
            res = reconstruct_potential(S, partition, P_obs, q_init, a, max_iter, block=block)
        best = (a, res)
        if res.misfit_history[-1] <= tau * delta:
            break
    return best


def noise_norm(P_obs, P_clean, me, block=None):
    """Mass-weighted norm of the data perturbation (optionally on a block)."""
    return float(np.linalg.norm(_block(misfit_matrix(P_obs, P_clean, me), block)))


def galerkin_transfer(dn_fine, grid_fine, part_fine, grid_coarse, part_coarse):
    """Pairing matrix for coarse exterior data from a fine-grid DN map.

    Coarse data are extended by zero into Omega, interpolated (multi)linearly
    to the fine grid and paired there: ``P_c = T^T P_f T``.
    """
    Ec, Ef = part_coarse.exterior, part_fine.exterior
    T = np.zeros((Ef.size, Ec.size))
    axes = [grid_coarse.axis] * grid_coarse.n
    for k in range(Ec.size):
        e = np.zeros(grid_coarse.size)
        e[Ec[k]] = 1.0
        interp = RegularGridInterpolator(axes, e.reshape(grid_coarse.shape))
        T[:, k] = interp(grid_fine.coords[Ef])
    return T.T @ _pairing(dn_fine) @ T
