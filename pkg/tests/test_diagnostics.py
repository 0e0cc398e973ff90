import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraclab.diagnostics import (
    TensorField,
    build_frequency_geometry,
    doubling_check,
    frequency_profile,
    mu_beta,
    sucp_probe,
)
from fraclab.exceptions import InsufficientResolution
from fraclab.pipeline import build_lab

RADII = np.geomspace(0.1, 0.8, 10)


def _field(fun, n=161, s=0.5):
    x = np.linspace(-1, 1, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    return TensorField([x, x], fun(X, Y), s)


def _identity_geometry():
    return build_frequency_geometry(np.eye(2), np.zeros(2))


def test_mu_beta_examples():
    A = np.diag([2.0, 1.0])
    mu, beta = mu_beta(A, np.array([[1.0, 0.0], [1.0, 1.0]]))
    np.testing.assert_allclose(mu, [2.0, 1.5])
    np.testing.assert_allclose(beta, [[1.0, 0.0], [4 / 3, 2 / 3]])


def test_mu_beta_identity():
    z = np.array([[0.3, -0.4]])
    mu, beta = mu_beta(np.eye(2), z)
    assert mu[0] == pytest.approx(1.0)
    np.testing.assert_allclose(beta, z)


def test_mu_beta_undefined_at_origin():
    with pytest.raises(ValueError):
        mu_beta(np.eye(2), np.zeros((1, 2)))


@settings(max_examples=30, deadline=None)
@given(
    a=st.floats(0.2, 5.0), b=st.floats(0.2, 5.0), c=st.floats(-0.9, 0.9),
    z=st.lists(st.floats(-1, 1), min_size=2, max_size=2).filter(lambda v: np.hypot(*v) > 1e-3),
)
def test_mu_lies_between_extreme_eigenvalues(a, b, c, z):
    off = c * np.sqrt(a * b)
    A = np.array([[a, off], [off, b]])
    ev = np.linalg.eigvalsh(A)
    mu, beta = mu_beta(A, np.array([z]))
    assert ev[0] * (1 - 1e-12) <= mu[0] <= ev[1] * (1 + 1e-12)
    np.testing.assert_allclose(mu[0] * beta[0], A @ np.asarray(z), atol=1e-12)


def test_normalizing_map_makes_centre_coefficient_identity():
    A = np.array([[2.0, 0.3], [0.3, 1.0]])
    geom = build_frequency_geometry(A, np.array([0.1, 0.2]))
    np.testing.assert_allclose(geom.normalized_coefficient(np.array([[0.5, 0.5]]))[0], np.eye(2), atol=1e-12)
    z = np.array([[0.4, -0.1]])
    np.testing.assert_allclose(geom.to_physical(geom.to_normalized(z)), z)


@pytest.mark.parametrize("degree, fun", [(1, lambda X, Y: X), (2, lambda X, Y: X**2 - Y**2)])
def test_homogeneous_harmonic_frequency(degree, fun):
    prof = frequency_profile(_field(fun), _identity_geometry(), RADII)
    np.testing.assert_allclose(prof.N, degree, rtol=0.1)
    rep = doubling_check(prof)
    np.testing.assert_allclose(rep.ratios, 2.0 ** (1 + 2 * degree), rtol=0.15)
    assert not rep.violation


def test_smoothed_profile_agrees():
    prof = frequency_profile(_field(lambda X, Y: X), _identity_geometry(), RADII, method="smoothed")
    np.testing.assert_allclose(prof.N, 1.0, rtol=0.1)


def test_constant_field_has_zero_frequency():
    prof = frequency_profile(_field(lambda X, Y: np.ones_like(X)), _identity_geometry(), RADII)
    np.testing.assert_allclose(prof.D, 0.0, atol=1e-14)
    np.testing.assert_allclose(prof.N, 0.0, atol=1e-14)
    assert np.all(prof.H > 0)


def test_zero_field_rejected():
    with pytest.raises(ValueError):
        frequency_profile(_field(lambda X, Y: 0 * X), _identity_geometry(), RADII)


def test_radius_below_resolution():
    with pytest.raises(InsufficientResolution):
        frequency_profile(_field(lambda X, Y: X, n=21), _identity_geometry(), [0.1, 0.5])


def test_doubling_needs_enough_radii():
    prof = frequency_profile(_field(lambda X, Y: X), _identity_geometry(), [0.2, 0.3, 0.4])
    with pytest.raises(InsufficientResolution):
        doubling_check(prof)


def test_unknown_method():
    with pytest.raises(ValueError):
        frequency_profile(_field(lambda X, Y: X), _identity_geometry(), RADII, method="cubic")


@pytest.fixture(scope="module")
def small():
    return build_lab(n=1, Lbox=1.0, N=33, s=0.5)


def test_sucp_full_observation_is_at_least_one(small):
    res = sucp_probe(small.S, None, np.arange(small.grid.size))
    assert res.value >= 1.0 - 1e-10
    m = small.S.masses
    assert np.sum(m * res.minimizer**2) == pytest.approx(1.0)


def test_sucp_empty_set_rejected(small):
    with pytest.raises(ValueError):
        sucp_probe(small.S, None, np.zeros(small.grid.size, bool))


@settings(max_examples=20, deadline=None)
@given(st.sets(st.integers(0, 32), min_size=1, max_size=33), st.sets(st.integers(0, 32)))
def test_sucp_is_monotone_in_the_observation_set(small, base, extra):
    lo = sucp_probe(small.S, None, sorted(base)).value
    hi = sucp_probe(small.S, None, sorted(base | extra)).value
    assert hi >= lo - 1e-9
