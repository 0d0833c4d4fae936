"""
Tests for the built-in double-well potentials and their validation.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from potential import (
    Potential,
    PotentialError,
    extend_outside_box,
    growth_exponent_check,
    make_asymmetric,
    make_degenerate,
    make_potential,
    make_quartic,
    reflect,
    validate_potential,
)


def test_quartic_values(quartic):
    assert quartic.W(0.0) == 1.0
    assert quartic.d2W(1.0) == 8.0
    assert quartic.dW(0.0) == 0.0
    assert quartic.d2W(0.0) == -4.0
    assert (quartic.a, quartic.b, quartic.c, quartic.q, quartic.ell) == (-1.0, 1.0, 0.0, 1.0, 8.0)


def test_asymmetric_zero_beta_is_quartic(quartic):
    s = np.linspace(-3, 3, 1001)
    flat = make_asymmetric(0.0)
    assert_allclose(flat.W(s), quartic.W(s), rtol=0, atol=0)
    assert_allclose(flat.dW(s), quartic.dW(s), rtol=0, atol=1e-15)
    assert flat.c == 0.0


def test_asymmetric_curvature_at_wells(asymmetric):
    # 8(1 + beta*arctan(+-1)) with beta = 0.5
    assert_allclose(asymmetric.d2W(1.0), 8.0 + math.pi, rtol=1e-14)
    assert_allclose(asymmetric.d2W(-1.0), 8.0 - math.pi, rtol=1e-14)
    assert -1.0 < asymmetric.c < 1.0
    assert abs(asymmetric.dW(asymmetric.c)) < 1e-12


@pytest.mark.parametrize("beta", [2 / math.pi, -0.7, 1.0])
def test_asymmetric_rejects_large_beta(beta):
    with pytest.raises(PotentialError):
        make_asymmetric(beta)


@pytest.mark.parametrize("q", [0.0, 1.0, 1.5, -0.2])
def test_degenerate_rejects_exponent(q):
    with pytest.raises(PotentialError):
        make_degenerate(q)


def test_degenerate_values():
    p = make_degenerate(0.5)
    assert p.W(0.0) == 1.0
    for h in (1e-4, 1e-6, 1e-8):
        assert_allclose(p.W(1.0 - h) / h ** 1.5, 2.0 ** 1.5, rtol=h + 1e-7)


def test_validate_quartic():
    report = validate_potential(make_quartic())
    assert report.passed, report.failures()
    assert abs(report.measured["q"] - 1.0) <= 1e-6
    assert abs(report.measured["ell_a"] - 8.0) <= 1e-6
    assert abs(report.measured["ell_b"] - 8.0) <= 1e-6
    assert report.checks["equal_well_limits"].passed


def test_validate_single_well_fails():
    single = Potential(
        name="single-well",
        W=lambda s: np.asarray(s, dtype=float) ** 2,
        dW=lambda s: 2.0 * np.asarray(s, dtype=float),
        d2W=lambda s: 2.0 + 0.0 * np.asarray(s, dtype=float),
        a=-1.0, b=1.0, c=0.0,
    )
    report = validate_potential(single)
    assert not report.checks["two_zeros"].passed
    assert not report.passed


def test_validate_reports_non_finite_instead_of_raising():
    broken = Potential(
        name="broken",
        W=lambda s: np.log(np.asarray(s, dtype=float)),
        dW=lambda s: 1.0 / np.asarray(s, dtype=float),
        d2W=lambda s: -1.0 / np.asarray(s, dtype=float) ** 2,
        a=-1.0, b=1.0, c=0.0,
    )
    report = validate_potential(broken)
    assert not report.passed
    assert not report.checks["finite"].passed


def test_validate_asymmetric_well_limits(asymmetric):
    report = validate_potential(asymmetric)
    assert report.passed, report.failures()
    assert abs(report.measured["ell_a"] - 8.0 * (1 - 0.5 * math.pi / 4)) <= 1e-6
    assert abs(report.measured["ell_b"] - 8.0 * (1 + 0.5 * math.pi / 4)) <= 1e-6
    # the single-limit hypothesis is reported, not enforced
    assert not report.checks["equal_well_limits"].passed
    assert report.checks["equal_well_limits"].advisory


def test_validate_degenerate():
    report = validate_potential(make_degenerate(0.5))
    assert report.passed, report.failures()
    assert abs(report.measured["q"] - 0.5) <= 1e-6


def test_built_ins_nonnegative_with_zeros_at_wells():
    s = np.linspace(-3, 3, 6001)
    for p in (make_quartic(), make_asymmetric(0.5), make_asymmetric(-0.5), make_degenerate(0.3)):
        w = p.W(s)
        assert np.all(w >= 0.0)
        near_wells = (np.abs(s - p.a) < 1e-9) | (np.abs(s - p.b) < 1e-9)
        assert np.all(w[~near_wells] > 0.0)


def test_asymmetric_converges_to_quartic(quartic):
    s = np.linspace(-2, 2, 2001)
    for beta in (1e-1, 1e-2, 1e-3):
        gap = np.max(np.abs(make_asymmetric(beta).W(s) - quartic.W(s)))
        assert gap <= 10.0 * beta


def test_reflection_swaps_wells(asymmetric):
    mirrored = reflect(asymmetric)
    s = np.linspace(-2, 2, 101)
    assert_allclose(mirrored.W(s), asymmetric.W(-s))
    assert_allclose(mirrored.c, -asymmetric.c)
    assert (mirrored.ell_a, mirrored.ell_b) == (asymmetric.ell_b, asymmetric.ell_a)
    assert validate_potential(mirrored).passed


def test_growth_condition_quartic(quartic):
    c1, ok = growth_exponent_check(quartic, exponent=3.0)
    assert ok
    assert 3.5 <= c1 <= 4.0


def test_extension_outside_box(quartic):
    boxed = extend_outside_box(quartic)
    inside = np.linspace(-1.4, 1.4, 57)
    assert_allclose(boxed.W(inside), quartic.W(inside))
    w, dw, d2w = quartic.W(1.4), quartic.dW(1.4), quartic.d2W(1.4)
    assert_allclose(boxed.W(2.0), w + dw * 0.6 + 0.5 * d2w * 0.36)
    assert boxed.d2W(5.0) == d2w


def test_make_potential_from_config():
    assert make_potential({"kind": "degenerate", "q": 0.25}).q == 0.25
    assert make_potential({"kind": "asymmetric", "beta": 0.1}).params["beta"] == 0.1
    with pytest.raises(PotentialError):
        make_potential({"kind": "sextic"})
