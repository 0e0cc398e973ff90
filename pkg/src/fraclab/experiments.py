"""Named experiments driven by a validated :class:`~fraclab.config.ExperimentConfig`.

Every experiment returns a :class:`CheckReport` and a list of artifacts
``(filename, writer)`` where ``writer(path)`` produces the file. Nothing is
written here, so a failing experiment leaves no partial output behind.
"""
from __future__ import annotations

import warnings

import numpy as np

from . import io
from .acceptance import run_suite
from .assembly import assemble_extension_operator
from .config import potential_values
from .diagnostics import (
    TensorField,
    build_frequency_geometry,
    doubling_check,
    extension_coefficient,
    frequency_profile,
)
from .exceptions import IllConditionedWarning
from .extension import (
    build_extension_grid,
    neumann_trace,
    poisson_extension,
    reflect_and_conjugate,
    solve_extension_dirichlet,
    trace_target,
)
from .forward import (
    assemble_dn_map,
    dn_via_neumann,
    eigenvalue_report,
    integral_identity_residual,
    solution_bound,
    solve_dirichlet,
)
from .inverse import (
    RungeProblem,
    add_multiplicative_noise,
    default_probes,
    discrepancy_alpha,
    extract_moments,
    jacobian_fd_check,
    measurement_block,
    noise_norm,
    reconstruct_potential,
    runge_sweep,
)
from .pipeline import build_lab, smooth_random_field
from .report import CheckReport


def _rel(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def lab_from_config(cfg, s=None):
    g, op, dom = cfg.grid, cfg.operator, cfg.domain
    return build_lab(
        n=g.n, Lbox=g.Lbox, N=g.N, bc=g.bc, coefficient=op.A, s=op.s if s is None else s,
        omega=dom.omega if dom else None,
        O1=dom.O1 if dom else None,
        O2=dom.O2 if dom else None,
    )


def _header(cfg, **extra):
    h = {"n": cfg.grid.n, "N": cfg.grid.N, "Lbox": cfg.grid.Lbox, "bc": cfg.grid.bc, "s": cfg.operator.s}
    h.update(extra)
    return h


def _potential(cfg, name, lab):
    return potential_values(cfg.potentials.get(name), lab.grid, lab.partition)


def _matrix_artifact(name, matrix, header):
    return name, lambda path: io.write_matrix_csv(path, matrix, header)


def _columns_artifact(name, columns, header):
    return name, lambda path: io.write_columns_csv(path, columns, header)


# --------------------------------------------------------------------------


def run_operator(cfg):
    params = cfg.experiment.params
    rng = np.random.default_rng(params.seed)
    lab = lab_from_config(cfg)
    rep = CheckReport()
    s = lab.s
    L = lab.op.matrix
    K = lab.op.stiffness
    rep.at_most("mass_symmetry", np.linalg.norm(K - K.T) / np.linalg.norm(K), 1e-12)
    d = lab.decomp
    recon = (d.eigenvectors * d.eigenvalues) @ d.eigenvectors.T * d.masses[None, :]
    rep.at_most("spectral_reconstruction", _rel(recon, L), 1e-10)
    s1, s2 = 0.4 * s, 0.6 * s
    rep.at_most(
        "semigroup_residual",
        _rel(lab.with_power(s1).S.matrix @ lab.with_power(s2).S.matrix, lab.S.matrix),
        1e-10,
    )
    rep.at_most("s1_equals_L", _rel(lab.with_power(1.0).S.matrix, L), 1e-12)
    half = lab.with_power(0.5).S.matrix
    rep.at_most("half_squared_equals_L", _rel(half @ half, L), 1e-10)
    worst = 0.0
    for _ in range(50):
        f, g = rng.standard_normal(lab.grid.size), rng.standard_normal(lab.grid.size)
        a = float(np.sum((lab.S.matrix @ f) * g * lab.S.masses))
        b = lab.S.dirichlet_form(f, g)
        worst = max(worst, abs(a - b) / max(abs(a), 1e-300))
    rep.at_most("dirichlet_form_identity", worst, 1e-10)
    off = lab.S.kernel[~np.eye(lab.grid.size, dtype=bool)]
    rep.at_least("kernel_min_offdiag_relative", off.min() / off.max(), -1e-8)
    rep.report("lambda_min", float(d.eigenvalues[0]))
    rep.report("lambda_max", float(d.lambda_max))
    header = _header(cfg, tag="fractional_power")
    arts = [
        _matrix_artifact("operator.csv", lab.S.matrix, header),
        _matrix_artifact("local_operator.csv", L, _header(cfg, tag="local_operator")),
        _columns_artifact("eigenvalues.csv", {"k": np.arange(d.eigenvalues.size), "lambda": d.eigenvalues}, header),
    ]
    return rep, arts


def run_forward(cfg):
    params = cfg.experiment.params
    rng = np.random.default_rng(params.seed)
    lab = lab_from_config(cfg)
    P = lab.partition
    q = _potential(cfg, "q", lab)
    rep = CheckReport()
    ev = eigenvalue_report(lab.S, q, P)
    rep.holds("eigenvalue_condition", not ev.zero_is_eigenvalue, float(ev.eigenvalues[0]), "0 not an eigenvalue")
    ev5 = eigenvalue_report(lab.S, q + 5.0, P)
    rep.at_most("shift_identity", np.abs(ev5.eigenvalues - ev.eigenvalues - 5.0).max(), 1e-10)
    residuals, bounds = [], []
    last = None
    for _ in range(params.trials):
        g = smooth_random_field(lab.grid.coords[P.exterior], rng)
        last = solve_dirichlet(lab.S, q, P, g)
        residuals.append(last.residual)
        bounds.append(solution_bound(last, lab.S.masses, P))
    rep.at_most("max_solver_residual", max(residuals), 1e-10)
    rep.report("bound_constant", max(bounds))
    rep.report("eigenvalues", ev.eigenvalues.tolist())
    header = _header(cfg, tag="forward_solution")
    arts = [_columns_artifact("solution.csv", {"node": np.arange(lab.grid.size), **_coord_columns(lab), "u": last.u}, header)]
    return rep, arts


def _coord_columns(lab):
    return {"xy"[d]: lab.grid.coords[:, d] for d in range(lab.grid.n)}


def run_dnmap(cfg):
    params = cfg.experiment.params
    rng = np.random.default_rng(params.seed)
    lab = lab_from_config(cfg)
    P = lab.partition
    q1 = _potential(cfg, "q1", lab)
    q2 = _potential(cfg, "q2", lab) if "q2" in cfg.potentials else q1
    rep = CheckReport()
    dn = assemble_dn_map(lab.S, q1, P)
    ne = P.exterior.size
    worst = 0.0
    for _ in range(params.trials):
        g, h = rng.standard_normal(ne), rng.standard_normal(ne)
        a, b = dn.pair(g, h), dn.pair(h, g)
        worst = max(worst, abs(a - b) / max(abs(a), abs(b)))
    rep.at_most("pair_symmetry", worst, 1e-10)
    rep.at_most("bilinear_vs_flux", dn.representation_gap, 1e-10)
    worst = 0.0
    for _ in range(params.trials):
        g = rng.standard_normal(ne)
        sol = solve_dirichlet(lab.S, q1, P, g)
        worst = max(worst, _rel(dn_via_neumann(lab.S, P, sol).dn, dn.apply(g)))
    rep.at_most("neumann_vs_flux", worst, 1e-10)
    same = np.array_equal(q1, q2)
    tol = 1e-12 if same else 1e-9
    worst = 0.0
    for _ in range(params.trials):
        g1, g2 = _supported(P, "O1", rng), _supported(P, "O2", rng)
        worst = max(worst, integral_identity_residual(lab.S, q1, q2, P, g1, g2))
    rep.at_most("integral_identity_residual", worst, tol)
    header = _header(cfg, tag="dn_map")
    arts = [
        _matrix_artifact("dn_map.csv", dn.matrix, header),
        _columns_artifact("exterior_nodes.csv", {"node": P.exterior, "mass": dn.exterior_masses}, header),
    ]
    return rep, arts


def _supported(P, name, rng):
    g = np.zeros(P.exterior.size)
    nodes = getattr(P, name)
    if nodes.size:
        pos = P.exterior_positions(name)
        g[pos] = rng.standard_normal(pos.size)
    else:
        g[:] = rng.standard_normal(g.size)
    return g


def run_extension(cfg):
    params = cfg.experiment.params
    lab = lab_from_config(cfg)
    s = lab.s
    x = lab.grid.coords
    u = np.exp(-np.sum(x * x, axis=1))
    rep = CheckReport()
    errs = {}
    sol = None
    for J in (params.J, 2 * params.J):
        eg = build_extension_grid(lab.grid, s, Ymax=params.Ymax, J=J, gamma=params.gamma, decomp=lab.decomp)
        cur = solve_extension_dirichlet(assemble_extension_operator(eg, lab.op, s), u)
        est_a, est_b = neumann_trace(cur)
        target = trace_target(lab.S, u)
        errs[J] = (_rel(est_a, target), _rel(est_b, target))
        if sol is None:
            sol, grid0, est0 = cur, eg, (est_a, est_b, target)
    rep.at_most("trace_error_a", errs[params.J][0], 0.05)
    rep.at_most("refinement_ratio_a", errs[2 * params.J][0] / errs[params.J][0], 0.55)
    rep.report("trace_error_b", errs[params.J][1])
    rep.at_most("solver_residual", sol.residual, 1e-10)
    Up = poisson_extension(lab.decomp, s, grid0.y_nodes, u)
    rep.at_most("solver_agreement", _rel(sol.U, Up), 0.02)
    rep.report("stability_ratio", sol.stability)
    rep.report("Ymax", grid0.Ymax)
    rep.report("gamma", grid0.gamma)
    header = _header(cfg, tag="extension", J=params.J, Ymax=grid0.Ymax, gamma=grid0.gamma)
    arts = [
        ("field.csv", lambda path: _write_extension_field(path, lab.grid, grid0.y_nodes, sol.U, header)),
        _columns_artifact("trace.csv", {"estimator_a": est0[0], "estimator_b": est0[1], "target": est0[2]}, header),
    ]
    return rep, arts


def _write_extension_field(path, grid, y, U, header):
    if grid.n == 1:
        return io.write_field_csv(path, grid.coords[:, 0], y, U, header)
    cols = {
        "x": np.repeat(grid.coords[:, 0], y.size),
        "y": np.repeat(grid.coords[:, 1], y.size),
        "t": np.tile(y, grid.size),
        "U": U,
    }
    return io.write_columns_csv(path, cols, header)


def run_frequency(cfg):
    params = cfg.experiment.params
    lab = lab_from_config(cfg)
    s = lab.s
    x = lab.grid.coords[:, 0]
    L = lab.grid.Lbox
    Ymax = params.Ymax if params.Ymax is not None else 5.0 * L
    gamma = params.gamma if params.gamma is not None else 2.0
    eg = build_extension_grid(lab.grid, s, Ymax=Ymax, J=params.J, gamma=gamma)
    patch = np.abs(x) < 0.5 * L
    datum = np.where(np.abs(x - 0.75 * L) < 0.2 * L, np.cos(np.pi * (x - 0.75 * L) / (0.4 * L)) ** 2, 0.0)
    sol = solve_extension_dirichlet(assemble_extension_operator(eg, lab.op, s), datum, neumann_patch=patch)
    even, conj = reflect_and_conjugate(sol)
    rep = CheckReport()
    rep.at_most("even_reflection_residual", even.residual, 1e-8)
    rep.at_most("conjugate_residual", conj.residual, 1e-6)
    field = TensorField.from_reflection(even, lab.grid)
    geo = build_frequency_geometry(extension_coefficient(lab.grid, lab.coeff), [0.0, 0.0])
    radii = np.asarray(params.radii if params.radii is not None else np.geomspace(0.05 * L, 0.4 * L, 10))
    shell = frequency_profile(field, geo, radii, method="shell")
    smooth = frequency_profile(field, geo, radii, method="smoothed")
    rep.at_most("shell_vs_smoothed_H", np.abs(shell.H / smooth.H - 1).max(), 0.10)
    rep.at_most("shell_vs_smoothed_D", np.abs(shell.D / smooth.D - 1).max(), 0.10)
    dbl = doubling_check(shell)
    rep.holds("doubling_constant_found", not dbl.violation, dbl.C_star, f"<= C_cap = {dbl.C_cap:g}")
    rep.report("max_doubling_ratio", dbl.max_ratio)
    header = _header(cfg, tag="frequency_profile", shell_width=shell.shell_width)
    arts = [_columns_artifact("profile.csv", {"r": shell.radii, "H": shell.H, "D": shell.D, "N": shell.N}, header)]
    return rep, arts


def run_runge(cfg):
    params = cfg.experiment.params
    lab = lab_from_config(cfg)
    P = lab.partition
    q = _potential(cfg, "q", lab)
    alphas = np.asarray(params.alphas if params.alphas is not None else 10.0 ** -np.arange(2, 11), float)
    alphas = np.sort(alphas)[::-1]
    target = np.ones(P.interior.size)
    sweep = runge_sweep(RungeProblem(lab.S, q, P, "O1"), target, alphas)
    errs = [r.relative_error for r in sweep]
    rep = CheckReport()
    rep.holds("strictly_decreasing", all(b < a for a, b in zip(errs, errs[1:])), errs, "strictly decreasing")
    rep.at_most("final_relative_error", errs[-1], 0.05)
    rep.report("gram_condition", sweep[-1].gram_condition)
    header = _header(cfg, tag="runge_sweep")
    arts = [
        _columns_artifact("sweep.csv", {"alpha": alphas, "relative_error": errs}, header),
        _columns_artifact("control.csv", {"node": P.exterior, "control": sweep[-1].exterior_datum}, header),
    ]
    return rep, arts


def run_moments(cfg):
    params = cfg.experiment.params
    lab = lab_from_config(cfg)
    P = lab.partition
    q1 = _potential(cfg, "q1", lab)
    q2 = _potential(cfg, "q2", lab)
    probes = default_probes(lab.grid, P, params.probes)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllConditionedWarning)
        base = extract_moments(lab.S, P, q1, q1, probes, params.alpha)
        ms = extract_moments(lab.S, P, q1, q2, probes, params.alpha)
    rep = CheckReport()
    b = float(np.abs(base.moments).max())
    rep.at_most("baseline_relative", b / base.scale, 1e-9)
    rep.at_most("identity_consistency", np.abs(ms.moments - ms.identity_values).max() / ms.scale, 1e-9)
    if not np.array_equal(q1, q2):
        rep.at_least("separation_factor", np.abs(ms.moments).max() / max(b, 1e-300), 10.0)
    header = _header(cfg, tag="moments", alpha=params.alpha)
    arts = [
        _columns_artifact(
            "moments.csv",
            {
                "k": np.arange(len(ms.moments)),
                "moment": ms.moments,
                "identity_value": ms.identity_values,
                "target": ms.targets,
                "budget": ms.budgets,
                "runge_error": ms.runge_errors_1,
            },
            header,
        )
    ]
    return rep, arts


def run_reconstruct(cfg):
    params = cfg.experiment.params
    rng = np.random.default_rng(params.seed)
    lab = lab_from_config(cfg)
    P = lab.partition
    qt = _potential(cfg, "q_true", lab)
    block = measurement_block(P) if params.partial_data else None
    rep = CheckReport()
    nodes = np.sort(rng.choice(P.interior.size, min(5, P.interior.size), replace=False))
    rep.at_most("jacobian_fd", jacobian_fd_check(lab.S, 0.3 * qt, P, nodes).max(), 1e-6)
    dn = assemble_dn_map(lab.S, qt, P)
    me = lab.S.masses[P.exterior]
    if params.noise > 0:
        P_obs = add_multiplicative_noise(dn, params.noise, rng)
        delta = noise_norm(P_obs, dn.pairing_matrix, me, block)
        alphas = params.alphas if params.alphas is not None else 10.0 ** -np.arange(1, 12, 0.25)
        alpha, res = discrepancy_alpha(lab.S, P, P_obs, delta, alphas, max_iter=params.max_iter, block=block)
        tol = 0.30
        rep.report("noise_norm", delta)
    else:
        P_obs = dn.pairing_matrix
        res = reconstruct_potential(lab.S, P, P_obs, 0.0, params.alpha_q, params.max_iter, block=block)
        alpha, tol = params.alpha_q, 0.10
    m = lab.S.masses[P.interior]
    err = float(np.sqrt(np.sum(m * (res.q - qt) ** 2) / max(np.sum(m * qt**2), 1e-300)))
    hist = np.asarray(res.misfit_history)
    if np.any(qt != 0):
        rep.at_most("relative_l2_error", err, tol)
    else:
        rep.at_most("recovered_sup_norm", np.abs(res.q).max(), 1e-8)
    rep.holds("misfit_nonincreasing", bool(np.all(np.diff(hist) <= 0)), hist.tolist(), "nonincreasing")
    rep.report("alpha_q", float(alpha))
    rep.report("iterations", int(res.iterations))
    rep.report("converged", bool(res.converged))
    rep.report("stop_reason", res.stop_reason)
    header = _header(cfg, tag="reconstruction", alpha_q=float(alpha))
    xi = {k: v[P.interior] for k, v in _coord_columns(lab).items()}
    arts = [
        _columns_artifact("q_hat.csv", {"node": P.interior, **xi, "q_hat": res.q, "q_true": qt}, header),
        _columns_artifact("history.csv", {"iteration": np.arange(hist.size), "misfit": hist}, header),
    ]
    return rep, arts


def run_suite_experiment(cfg, parallel=False):
    results = run_suite(seed=cfg.experiment.params.seed, parallel=parallel)
    rep = CheckReport()
    for r in results:
        rep.holds(f"criterion_{r.number}", r.passed, r.failed_checks(), "no failed checks")
        rep.report(f"criterion_{r.number}", r.to_dict())
        for k, v in r.timings.items():
            rep.timings[f"criterion_{r.number}_{k}"] = v
    cols = {
        "criterion": [r.number for r in results],
        "passed": [int(r.passed) for r in results],
    }
    arts = [_columns_artifact("suite.csv", cols, {"seed": cfg.experiment.params.seed})]
    return rep, arts, results


EXPERIMENT_RUNNERS = {
    "operator": run_operator,
    "forward": run_forward,
    "dnmap": run_dnmap,
    "extension": run_extension,
    "frequency": run_frequency,
    "runge": run_runge,
    "moments": run_moments,
    "reconstruct": run_reconstruct,
}
