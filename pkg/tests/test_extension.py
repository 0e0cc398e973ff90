import numpy as np
import pytest

from fraclab.assembly import assemble_extension_operator
from fraclab.exceptions import ReflectionError
from fraclab.extension import (
    ExtensionSolution,
    build_extension_grid,
    conjugate_values,
    default_grading,
    default_height,
    neumann_trace,
    poisson_extension,
    reflect_and_conjugate,
    solve_extension_dirichlet,
    trace_target,
)
from fraclab.pipeline import build_lab, bump


def _setup(s, bc="absorbing", N=33, L=2.0, J=128, Ymax=None, gamma=None):
    lab = build_lab(n=1, Lbox=L, N=N, bc=bc, s=s)
    eg = build_extension_grid(lab.grid, s, Ymax=Ymax, J=J, gamma=gamma, decomp=lab.decomp)
    return lab, assemble_extension_operator(eg, lab.op, s)


@pytest.mark.parametrize("s, gamma", [(0.5, 2.0), (0.25, 2.0 / 1.5), (0.75, 3.0), (0.05, 1.0 / 0.95), (0.95, 3.0)])
def test_default_grading(s, gamma):
    assert default_grading(s) == pytest.approx(gamma)


def test_unit_grading_is_uniform():
    lab = build_lab(n=1, Lbox=1.0, N=9)
    eg = build_extension_grid(lab.grid, 0.5, Ymax=4.0, J=8, gamma=1.0)
    np.testing.assert_allclose(eg.y_nodes, np.arange(9) * 0.5)


def test_default_height_reaches_tolerance():
    lab = build_lab(n=1, Lbox=2.0, N=33, bc="absorbing")
    Y = default_height(lab.decomp)
    assert np.exp(-np.sqrt(lab.decomp.eigenvalues[0]) * Y) == pytest.approx(1e-8)


@pytest.mark.parametrize(
    "kwargs",
    [dict(Ymax=2.0, J=4), dict(Ymax=2.0, gamma=0.5), dict(Ymax=0.5, omega_diameter=1.0), dict()],
)
def test_extension_grid_rejections(kwargs):
    lab = build_lab(n=1, Lbox=1.0, N=9)
    with pytest.raises(ValueError):
        build_extension_grid(lab.grid, 0.5, **kwargs)


def test_zero_datum_gives_zero_field():
    lab, op = _setup(0.4, J=32)
    sol = solve_extension_dirichlet(op, np.zeros(op.nx))
    assert np.all(sol.U == 0.0)


def test_datum_and_top_condition_are_imposed():
    lab, op = _setup(0.4, J=32)
    u = bump(lab.grid.coords, np.zeros(1), 1.0)
    sol = solve_extension_dirichlet(op, u)
    np.testing.assert_array_equal(sol.trace, u)
    assert np.all(sol.U[:, -1] == 0.0)
    assert sol.residual <= 1e-12


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_eigenvector_trace(s):
    lab, op = _setup(s, J=256)
    v = lab.decomp.eigenvectors[:, 1]
    sol = solve_extension_dirichlet(op, v)
    target = trace_target(lab.S, v)
    est_a, est_b = neumann_trace(sol)
    interior = slice(2, -2)
    scale = np.abs(target).max()
    assert np.abs(est_a - target)[interior].max() <= 0.05 * scale
    assert np.abs(est_b - target)[interior].max() <= 0.05 * scale


def test_half_power_field_separates():
    # at s = 1/2 each eigenmode extends as exp(-sqrt(lambda) y)
    lab, op = _setup(0.5, J=256)
    v = lab.decomp.eigenvectors[:, 0]
    sol = solve_extension_dirichlet(op, v)
    exact = poisson_extension(lab.decomp, 0.5, op.y_nodes, v, method="exact")
    assert np.abs(sol.U - exact).max() <= 0.01 * np.abs(v).max()


def test_quadrature_and_exact_poisson_extension_agree():
    lab = build_lab(n=1, Lbox=2.0, N=33, bc="absorbing")
    u = bump(lab.grid.coords, np.zeros(1), 1.0)
    y = np.array([0.0, 0.1, 1.0, 3.0])
    a = poisson_extension(lab.decomp, 0.3, y, u, method="exact")
    b = poisson_extension(lab.decomp, 0.3, y, u, method="quadrature")
    np.testing.assert_allclose(a, b, atol=1e-6)


def test_constant_datum_is_preserved_by_poisson_extension():
    lab = build_lab(n=1, Lbox=2.0, N=33, bc="reflecting")
    U = poisson_extension(lab.decomp, 0.3, np.array([0.0, 0.5, 5.0]), np.ones(lab.grid.size))
    np.testing.assert_allclose(U, 1.0, atol=1e-8)


def test_conjugate_of_linear_profile_at_one_half():
    lab, op = _setup(0.5, J=16, Ymax=4.0, gamma=2.0)
    U = np.tile(op.y_nodes, (op.nx, 1))
    W = conjugate_values(ExtensionSolution(U, op, 0.5))
    np.testing.assert_allclose(W, 1.0, rtol=1e-13)


@pytest.mark.parametrize("s", [0.3, 0.7])
def test_conjugate_of_constant_flux_profile(s):
    lab, op = _setup(s, J=16, Ymax=4.0, gamma=2.0)
    U = np.tile(op.y_nodes ** (2 * s), (op.nx, 1))
    W = conjugate_values(ExtensionSolution(U, op, s))
    np.testing.assert_allclose(W, 2 * s, rtol=1e-12)


def test_reflection_without_patch_support_raises():
    lab, op = _setup(0.5, J=64)
    u = bump(lab.grid.coords, np.zeros(1), 1.0)
    sol = solve_extension_dirichlet(op, u)
    patch = np.abs(lab.grid.axis) < 0.3
    with pytest.raises(ReflectionError):
        reflect_and_conjugate(sol, patch=patch)
    even, _ = reflect_and_conjugate(sol, patch=patch, diagnostic=True)
    assert even.values.shape == (op.nx, 2 * op.ny - 1)


def test_reflection_with_neumann_patch():
    lab, op = _setup(0.5, J=64)
    u = bump(lab.grid.coords, np.array([1.0]), 0.5)
    patch = np.abs(lab.grid.axis) < 0.3
    sol = solve_extension_dirichlet(op, u, neumann_patch=patch)
    even, conj = reflect_and_conjugate(sol)
    assert even.residual <= 1e-10
    assert conj.residual <= 1e-10
    np.testing.assert_allclose(even.values[:, : op.ny][:, ::-1], sol.U)


def test_stability_is_bounded_under_refinement():
    stabs = []
    for J in (32, 64, 128):
        lab, op = _setup(0.4, J=J)
        u = bump(lab.grid.coords, np.zeros(1), 1.0)
        stabs.append(solve_extension_dirichlet(op, u).stability)
    assert np.all(np.isfinite(stabs))
    assert max(stabs) <= 1.5 * min(stabs)


def test_wrong_datum_length():
    _, op = _setup(0.5, J=16)
    with pytest.raises(ValueError):
        solve_extension_dirichlet(op, np.zeros(op.nx + 1))
