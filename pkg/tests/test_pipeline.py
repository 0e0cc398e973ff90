import numpy as np
import pytest

from fraclab.pipeline import build_lab, bump, smooth_random_field
from fraclab.report import CheckReport


def test_bump_profile():
    x = np.array([[0.0], [0.25], [0.5], [0.75]])
    np.testing.assert_allclose(bump(x, np.zeros(1), 0.5, 2.0), [2.0, 1.0, 0.0, 0.0], atol=1e-15)


def test_random_field_depends_only_on_position():
    a = build_lab(N=17).grid.coords
    b = build_lab(N=33).grid.coords
    fa = smooth_random_field(a, np.random.default_rng(3))
    fb = smooth_random_field(b, np.random.default_rng(3))
    np.testing.assert_allclose(fa, fb[::2], rtol=1e-13)


def test_with_power_reuses_decomposition():
    lab = build_lab(N=17, s=0.5)
    other = lab.with_power(0.25)
    assert other.decomp is lab.decomp
    assert other.s == 0.25
    np.testing.assert_allclose(other.S.matrix @ other.S.matrix, lab.S.matrix, atol=1e-9)


def test_check_report():
    rep = CheckReport()
    rep.at_most("a", 0.1, 0.2)
    rep.at_least("b", 1.0, 2.0)
    rep.report("info", 5)
    rep.timings["t"] = 1.0
    assert not rep.passed
    assert rep.failed_checks() == ["b"]
    d = rep.to_dict()
    assert d["tolerances"] == {"a": "<= 0.2", "b": ">= 2"}
    assert d["reported"] == {"info": 5}
    assert "timings" not in d
