import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraclab.exceptions import AssemblyError, QuadratureError
from fraclab.pipeline import build_lab
from fraclab.spectral import (
    QuadratureSpec,
    apply_spectral_function,
    eigendecompose,
    extension_constant,
    fractional_power,
    heat_kernel,
    heat_log_slope,
    kernel_from_heat,
    matrix_function,
    poisson_symbol_exact,
    poisson_symbol_quadrature,
)

VARIABLE = {"kind": "diagonal", "entries": ["2+sin(pi*x)"]}

# exact values for N = 3, Lbox = 1, absorbing (computed symbolically)
ABSORBING_3_EIGS = np.array([3 - np.sqrt(5), 4.0, 3 + np.sqrt(5)])
ABSORBING_3_HALF = np.array([
    [1.9486832980505138, -0.63245553203367587, -0.051316701949486200],
    [-0.31622776601683793, 1.2649110640673517, -0.31622776601683793],
    [-0.051316701949486200, -0.63245553203367587, 1.9486832980505138],
])


@pytest.fixture(scope="module")
def tiny():
    return build_lab(n=1, Lbox=1.0, N=3, bc="absorbing")


@pytest.fixture(scope="module")
def reflecting():
    return build_lab(n=1, Lbox=2.0, N=41, bc="reflecting", coefficient=VARIABLE)


@pytest.fixture(scope="module")
def absorbing():
    return build_lab(n=1, Lbox=2.0, N=41, bc="absorbing", coefficient=VARIABLE)


def test_three_point_eigenvalues(tiny):
    np.testing.assert_allclose(tiny.decomp.eigenvalues, ABSORBING_3_EIGS, rtol=1e-13)


def test_three_point_square_root(tiny):
    S = fractional_power(tiny.decomp, 0.5)
    np.testing.assert_allclose(S.matrix, ABSORBING_3_HALF, rtol=1e-12)


def test_three_point_reflecting_spectrum():
    lab = build_lab(n=1, Lbox=1.0, N=3, bc="reflecting")
    np.testing.assert_allclose(lab.decomp.eigenvalues, [0.0, 2.0, 4.0], atol=1e-13)
    assert lab.decomp.eigenvalues[0] == 0.0
    np.testing.assert_allclose(lab.decomp.eigenvectors[:, 0], 1 / np.sqrt(2.0))


def test_eigenvectors_are_mass_orthonormal(reflecting):
    V = reflecting.decomp.eigenvectors
    G = V.T @ (reflecting.decomp.masses[:, None] * V)
    np.testing.assert_allclose(G, np.eye(V.shape[1]), atol=1e-10)


def test_unit_power_recovers_local_operator(absorbing):
    S1 = fractional_power(absorbing.decomp, 1.0)
    L = absorbing.op.matrix
    assert np.linalg.norm(S1.matrix - L) <= 1e-10 * np.linalg.norm(L)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0.05, 0.6), b=st.floats(0.05, 0.4), bc=st.sampled_from(["reflecting", "absorbing"]))
def test_semigroup_in_the_exponent(a, b, bc):
    lab = build_lab(n=1, Lbox=1.0, N=17, bc=bc, coefficient=VARIABLE)
    Sa = fractional_power(lab.decomp, a).matrix
    Sb = fractional_power(lab.decomp, b).matrix
    Sab = fractional_power(lab.decomp, a + b).matrix
    assert np.linalg.norm(Sa @ Sb - Sab) <= 1e-9 * np.linalg.norm(Sab)


def test_matrix_function_matches_apply(reflecting, rng):
    v = rng.standard_normal(reflecting.grid.size)
    F = matrix_function(reflecting.decomp, lambda lam: np.exp(-lam))
    np.testing.assert_allclose(F @ v, apply_spectral_function(reflecting.decomp, lambda lam: np.exp(-lam), v))


def test_non_finite_spectral_function_rejected(reflecting):
    with pytest.raises(ValueError), np.errstate(divide="ignore"):
        apply_spectral_function(reflecting.decomp, lambda lam: 1.0 / lam, np.ones(reflecting.grid.size))


@settings(max_examples=15, deadline=None)
@given(t=st.floats(0.01, 1.0), tau=st.floats(0.01, 1.0))
def test_heat_semigroup(t, tau):
    lab = build_lab(n=1, Lbox=1.0, N=17, bc="reflecting")
    m = lab.decomp.masses
    pt, ptau = heat_kernel(lab.decomp, t), heat_kernel(lab.decomp, tau)
    np.testing.assert_allclose((pt * m) @ ptau, heat_kernel(lab.decomp, t + tau), atol=1e-10)


def test_heat_kernel_conserves_mass_and_decays(reflecting):
    m = reflecting.decomp.masses
    for t in (0.01, 0.1, 1.0):
        p = heat_kernel(reflecting.decomp, t)
        np.testing.assert_allclose(p @ m, 1.0, atol=1e-10)
    wide = build_lab(n=1, Lbox=4.0, N=257)
    slope, _ = heat_log_slope(wide.grid, wide.decomp, 0.1)
    assert slope == pytest.approx(-0.25, abs=0.05)


@pytest.mark.parametrize("bc", ["reflecting", "absorbing"])
def test_dirichlet_form_identity(bc, rng):
    lab = build_lab(n=1, Lbox=2.0, N=33, bc=bc, coefficient=VARIABLE, s=0.4)
    f, g = rng.standard_normal((2, lab.grid.size))
    lhs = float(np.sum((lab.S.matrix @ f) * g * lab.S.masses))
    assert lab.S.dirichlet_form(f, g) == pytest.approx(lhs, rel=1e-10, abs=1e-10)


def test_reflecting_killing_term_vanishes(reflecting):
    np.testing.assert_allclose(reflecting.S.killing, 0.0, atol=1e-10)


def test_kernel_is_symmetric_and_nonnegative(reflecting):
    K = reflecting.S.kernel
    np.testing.assert_allclose(K, K.T, atol=1e-12 * np.abs(K).max())
    assert K.min() >= -1e-12 * K.max()
    assert np.all(np.diag(K) == 0.0)


def test_kernel_from_heat_matches_spectral_kernel():
    lab = build_lab(n=1, Lbox=1.0, N=33, bc="reflecting", s=0.5)
    Kh = kernel_from_heat(lab.decomp, 0.5)
    K = lab.S.kernel
    assert np.abs(Kh - K).max() <= 1e-4 * np.abs(K).max()


def test_truncated_time_range_is_rejected():
    lab = build_lab(n=1, Lbox=1.0, N=33, bc="reflecting", s=0.5)
    with pytest.raises(QuadratureError):
        kernel_from_heat(lab.decomp, 0.5, QuadratureSpec(t_min=1e-2, t_max=1e2, tails=False))


def test_extension_constant_at_one_half():
    assert extension_constant(0.5) == pytest.approx(-1.0, rel=1e-14)
    assert extension_constant(0.3) < 0


def test_poisson_symbol_at_zero_mode():
    assert poisson_symbol_exact(np.array([0.0]), 3.0, 0.3)[0] == 1.0
    assert poisson_symbol_quadrature(np.array([0.0]), 3.0, 0.3)[0] == pytest.approx(1.0, abs=1e-6)


def test_poisson_symbol_closed_form_at_one_half():
    lam = np.array([0.5, 2.0, 10.0])
    np.testing.assert_allclose(poisson_symbol_exact(lam, 0.7, 0.5), np.exp(-np.sqrt(lam) * 0.7), rtol=1e-12)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_poisson_quadrature_agrees_with_bessel_form(s):
    lam = np.geomspace(1e-2, 1e3, 12)
    for y in (0.05, 0.5, 2.0):
        ex = poisson_symbol_exact(lam, y, s)
        qu = poisson_symbol_quadrature(lam, y, s)
        np.testing.assert_allclose(qu, ex, atol=1e-6)


def test_small_height_limit_is_identity():
    lam = np.array([0.3, 3.0])
    np.testing.assert_allclose(poisson_symbol_exact(lam, 1e-8, 0.6), 1.0, atol=1e-4)


def test_asymmetric_operator_rejected():
    class Fake:
        stiffness = np.array([[1.0, 0.5], [0.0, 1.0]])
        masses = np.ones(2)
        bc = "reflecting"

    with pytest.raises(AssemblyError):
        eigendecompose(Fake())


def test_power_outside_range_rejected(reflecting):
    with pytest.raises(ValueError):
        fractional_power(reflecting.decomp, 1.5)
