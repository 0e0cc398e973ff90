import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraclab.exceptions import NearSingular
from fraclab.forward import (
    DirichletSolver,
    as_potential,
    assemble_dn_map,
    bilinear_form,
    dn_flux,
    dn_via_neumann,
    eigenvalue_report,
    integral_identity_residual,
    integral_identity_terms,
    solution_bound,
    solve_dirichlet,
)
from fraclab.pipeline import build_lab, bump, smooth_random_field

VARIABLE = {"kind": "diagonal", "entries": ["2+sin(pi*x)"]}


@pytest.fixture(scope="module")
def lab():
    return build_lab(
        n=1, Lbox=2.0, N=41, coefficient=VARIABLE, s=0.5,
        omega={"interval": [-0.5, 0.5]}, O1={"interval": [0.6, 1.8]}, O2={"interval": [-1.8, -0.6]},
    )


def _datum(lab, center, width=0.4):
    return bump(lab.grid.coords, np.array([center]), width)


def test_potential_coercion(lab):
    p = lab.partition
    assert as_potential(2.0, p).sup_norm == 2.0
    full = as_potential(np.arange(p.size, dtype=float), p)
    np.testing.assert_array_equal(full.values, p.interior.astype(float))
    np.testing.assert_array_equal(full.full[p.exterior], 0.0)
    with pytest.raises(ValueError):
        as_potential(np.ones(3), p)
    with pytest.raises(ValueError):
        as_potential(np.full(p.interior.size, np.nan), p)


def test_bilinear_form_is_symmetric(lab, rng):
    v, w = rng.standard_normal((2, lab.grid.size))
    q = rng.uniform(0, 1, lab.partition.interior.size)
    assert bilinear_form(lab.S, q, v, w, lab.partition) == pytest.approx(
        bilinear_form(lab.S, q, w, v, lab.partition), rel=1e-12
    )


def test_zero_datum_gives_zero_solution(lab):
    sol = solve_dirichlet(lab.S, 0.3, lab.partition, np.zeros(lab.grid.size))
    assert np.all(sol.u == 0.0)


def test_solution_matches_datum_and_equation(lab):
    g = _datum(lab, 1.2)
    q = 0.5
    sol = solve_dirichlet(lab.S, q, lab.partition, g)
    E, I = lab.partition.exterior, lab.partition.interior
    np.testing.assert_array_equal(sol.u[E], g[E])
    interior_residual = (lab.S.matrix @ sol.u)[I] + q * sol.u[I]
    assert np.abs(interior_residual).max() <= 1e-10 * np.abs(g).max()
    assert sol.residual <= 1e-12
    assert solution_bound(sol, lab.S.masses, lab.partition) > 0


def test_source_term(lab):
    f = np.ones(lab.partition.interior.size)
    sol = solve_dirichlet(lab.S, 0.0, lab.partition, np.zeros(lab.grid.size), f_source=f)
    I = lab.partition.interior
    np.testing.assert_allclose((lab.S.matrix @ sol.u)[I], f, atol=1e-10)


def test_eigenvalues_shift_with_constant_potential(lab):
    base = eigenvalue_report(lab.S, 0.0, lab.partition).eigenvalues
    shifted = eigenvalue_report(lab.S, 0.7, lab.partition).eigenvalues
    np.testing.assert_allclose(shifted, base + 0.7, rtol=1e-10)
    assert not eigenvalue_report(lab.S, 0.0, lab.partition).zero_is_eigenvalue


def test_potential_at_minus_eigenvalue_is_near_singular(lab):
    mu = eigenvalue_report(lab.S, 0.0, lab.partition).eigenvalues[0]
    assert eigenvalue_report(lab.S, -mu, lab.partition).zero_is_eigenvalue
    with pytest.raises(NearSingular) as info:
        DirichletSolver(lab.S, -mu, lab.partition)
    assert info.value.condition > 1e14


def test_dn_map_is_symmetric_and_equals_bilinear_form(lab):
    dn = assemble_dn_map(lab.S, 0.4, lab.partition)
    assert dn.symmetry_defect() <= 1e-12
    assert dn.representation_gap <= 1e-12
    g, h = _datum(lab, 1.2)[lab.partition.exterior], _datum(lab, -1.2)[lab.partition.exterior]
    assert dn.pair(g, h) == pytest.approx(dn.pair(h, g), rel=1e-10)


def test_dn_map_is_bitwise_deterministic(lab):
    a = assemble_dn_map(lab.S, 0.4, lab.partition).matrix
    b = assemble_dn_map(lab.S, 0.4, lab.partition).matrix
    assert np.array_equal(a, b)


def test_dn_columns_match_single_solves(lab):
    dn = assemble_dn_map(lab.S, 0.2, lab.partition)
    g = _datum(lab, 1.0)
    sol = solve_dirichlet(lab.S, 0.2, lab.partition, g)
    np.testing.assert_allclose(dn.apply(g[lab.partition.exterior]), dn_flux(lab.S, lab.partition, sol), atol=1e-10)


def test_neumann_representation_matches_flux(lab):
    g = _datum(lab, -1.1)
    sol = solve_dirichlet(lab.S, 0.3, lab.partition, g)
    rep = dn_via_neumann(lab.S, lab.partition, sol)
    flux = dn_flux(lab.S, lab.partition, sol)
    assert np.abs(rep.dn - flux).max() <= 1e-10 * np.abs(flux).max()


def test_integral_identity_with_equal_potentials(lab):
    g1, g2 = _datum(lab, 1.2), _datum(lab, -1.2)
    lhs, rhs, _ = integral_identity_terms(lab.S, 0.5, 0.5, lab.partition, g1, g2)
    assert rhs == 0.0
    assert abs(lhs) <= 1e-12 * abs(assemble_dn_map(lab.S, 0.5, lab.partition).pair(
        g1[lab.partition.exterior], g2[lab.partition.exterior]))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_integral_identity_random_potentials(lab, seed):
    r = np.random.default_rng(seed)
    ni = lab.partition.interior.size
    q1, q2 = r.uniform(0, 2, ni), r.uniform(0, 2, ni)
    g1 = smooth_random_field(lab.grid.coords, r)
    g2 = smooth_random_field(lab.grid.coords, r)
    assert integral_identity_residual(lab.S, q1, q2, lab.partition, g1, g2) <= 1e-9


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), s=st.floats(0.1, 1.0))
def test_dn_pairing_symmetric_for_nonnegative_potentials(seed, s):
    lab = build_lab(n=1, Lbox=1.0, N=17, s=s, omega={"interval": [-0.4, 0.4]})
    q = np.random.default_rng(seed).uniform(0, 3, lab.partition.interior.size)
    assert assemble_dn_map(lab.S, q, lab.partition).symmetry_defect() <= 1e-10


def test_local_case_ignores_distant_data():
    lab = build_lab(n=1, Lbox=2.0, N=41, s=1.0, omega={"interval": [-0.5, 0.5]})
    g = bump(lab.grid.coords, np.array([1.5]), 0.3)
    sol = solve_dirichlet(lab.S, 0.0, lab.partition, g)
    assert np.abs(sol.u[lab.partition.interior]).max() <= 1e-14


def test_nonlocal_case_feels_distant_data(lab):
    g = bump(lab.grid.coords, np.array([1.5]), 0.3)
    sol = solve_dirichlet(lab.S, 0.0, lab.partition, g)
    assert np.abs(sol.u[lab.partition.interior]).min() > 1e-6
