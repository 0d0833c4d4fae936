"""
Tests for pixel and analytic isoperimetric profiles.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

import isoperimetry
from isoperimetry import (
    AnalyticSet,
    IsoperimetryError,
    PixelDomain,
    Rectangle,
    alpha,
    alpha_analytic,
    curvature_limit_sweep,
    erode,
    eroded_iso_bound_check,
    geometric_offsets,
    iso_analytic_rectangle,
    iso_anneal,
    iso_bruteforce,
    iso_profile_bruteforce,
    iso_profile_from_function,
    iso_profile_rectangle,
    level_set_alpha_check,
    one_sided_derivatives,
    perimeter_rel,
    random_region,
    semiconcavity_estimate,
)

UNIT = Rectangle(1.0, 1.0)


# ---------- pixel domains ----------

def test_perimeter_examples():
    dom = PixelDomain.rectangle(5, 5)
    assert perimeter_rel(dom.region(dom.mask)) == 0.0
    assert perimeter_rel(dom.region(np.zeros((5, 5), dtype=bool))) == 0.0
    single = np.zeros((5, 5), dtype=bool)
    single[2, 2] = True
    assert perimeter_rel(dom.region(single)) == pytest.approx(0.8)


def test_domain_invariants():
    dom = PixelDomain.rectangle(3, 7)
    assert abs(dom.measure - 1.0) <= 1e-12
    ring = np.ones((3, 3), dtype=bool)
    ring[:, 1] = False
    with pytest.raises(IsoperimetryError):
        PixelDomain.from_mask(ring)


def test_alpha_examples():
    dom = PixelDomain.rectangle(10, 10)
    rng = np.random.default_rng(0)
    E = random_region(dom, 30, rng)
    assert alpha(E, E) == 0.0
    bigger = dom.region(E.mask | random_region(dom, 20, rng).mask)
    assert alpha(E, bigger) == 0.0
    first = np.zeros((10, 10), dtype=bool)
    first[:2, :] = True
    second = np.zeros((10, 10), dtype=bool)
    second[5:8, :] = True
    assert alpha(dom.region(first), dom.region(second)) == pytest.approx(0.2)


def test_perimeter_dihedral_invariance():
    dom = PixelDomain.rectangle(4, 4)
    rng = np.random.default_rng(3)
    for _ in range(20):
        E = random_region(dom, int(rng.integers(1, 16)), rng)
        base = perimeter_rel(E)
        for k in range(4):
            for flip in (False, True):
                m = np.rot90(E.mask, k)
                m = np.fliplr(m) if flip else m
                assert perimeter_rel(dom.region(m)) == pytest.approx(base)


def test_bruteforce_corner_block():
    dom = PixelDomain.rectangle(4, 4)
    h = dom.h
    value, best = iso_bruteforce(dom, 4 * h * h)
    assert value == pytest.approx(4 * h)
    assert best.measure == pytest.approx(4 * h * h)
    assert perimeter_rel(best) == pytest.approx(value)
    corner = np.zeros((4, 4), dtype=bool)
    corner[:2, :2] = True
    # the corner block is one of the minimizers (row and column strips tie with it)
    assert perimeter_rel(dom.region(corner)) == pytest.approx(value)


def test_bruteforce_errors():
    dom = PixelDomain.rectangle(3, 3)
    with pytest.raises(IsoperimetryError, match="nearest attainable"):
        iso_bruteforce(dom, 0.5)
    with pytest.raises(IsoperimetryError, match="iso_anneal"):
        iso_bruteforce(PixelDomain.rectangle(5, 5), 0.2)


def test_large_delta_is_inactive():
    dom = PixelDomain.rectangle(3, 4)
    h2 = dom.h ** 2
    rng = np.random.default_rng(11)
    for k0 in (3, 6, 8):
        E0 = random_region(dom, k0, rng)
        for k in range(1, 12):
            free, _ = iso_bruteforce(dom, k * h2)
            local, _ = iso_bruteforce(dom, k * h2, constraint=(E0, E0.measure))
            assert local == pytest.approx(free)


def test_local_dominates_global_randomized():
    dom = PixelDomain.rectangle(3, 4)
    h2 = dom.h ** 2
    rng = np.random.default_rng(5)
    for _ in range(100):
        E0 = random_region(dom, int(rng.integers(1, 12)), rng)
        delta = float(rng.uniform(0, 0.5))
        vol = int(rng.integers(1, 12)) * h2
        local, _ = iso_bruteforce(dom, vol, constraint=(E0, delta))
        free, _ = iso_bruteforce(dom, vol)
        assert local >= free - 1e-12


def test_local_profile_nonincreasing_in_delta():
    dom = PixelDomain.rectangle(3, 3)
    rng = np.random.default_rng(2)
    E0 = random_region(dom, 4, rng)
    free = iso_profile_bruteforce(dom)
    previous = None
    for delta in (0.0, 1 / 9, 2 / 9, 3 / 9, 4 / 9):
        prof = iso_profile_bruteforce(dom, constraint=(E0, delta))
        assert np.all(prof.values >= free.values - 1e-12)
        if previous is not None:
            assert np.all(prof.values <= previous + 1e-12)
        previous = prof.values
    # alpha = exactly delta is admissible
    assert math.isfinite(iso_bruteforce(dom, E0.measure, constraint=(E0, 0.0))[0])


def test_constrained_minimizer_is_recovered():
    dom = PixelDomain.rectangle(3, 3)
    h2 = dom.h ** 2
    for k in range(1, 9):
        value, E0 = iso_bruteforce(dom, k * h2)
        for delta in (0.0, h2):
            local, _ = iso_bruteforce(dom, k * h2, constraint=(E0, delta))
            assert local == pytest.approx(perimeter_rel(E0))
            assert local == pytest.approx(value)


def test_threaded_enumeration_matches(monkeypatch):
    dom = PixelDomain.rectangle(3, 4)
    h2 = dom.h ** 2
    serial = [iso_bruteforce(dom, k * h2) for k in (3, 5)]
    monkeypatch.setattr(isoperimetry, "CHUNK", 256)
    threaded = [iso_bruteforce(dom, k * h2, threads=4) for k in (3, 5)]
    for (v1, r1), (v2, r2) in zip(serial, threaded):
        assert v1 == v2
        assert np.array_equal(r1.mask, r2.mask)


def test_anneal_is_an_upper_bound():
    dom = PixelDomain.rectangle(4, 4)
    h2 = dom.h ** 2
    exact, _ = iso_bruteforce(dom, 6 * h2)
    value, region = iso_anneal(dom, 6 * h2, np.random.default_rng(1), steps=2000)
    assert value >= exact - 1e-12
    assert region.measure == pytest.approx(6 * h2)


# ---------- analytic rectangles ----------

def test_analytic_examples():
    assert iso_analytic_rectangle(1.0, 0.25) == pytest.approx(0.886227, abs=1e-6)
    assert iso_analytic_rectangle(1.0, 0.5) == pytest.approx(1.0)
    branches = UNIT.branches(1 / math.pi)
    assert branches["quarter_disk"] == pytest.approx(1.0)
    assert branches["strip"] == pytest.approx(1.0)
    with pytest.raises(IsoperimetryError):
        iso_analytic_rectangle(1.0, 1.2)


def test_analytic_complement_symmetry():
    for w in (1.0, 0.8, 1.7):
        for v in np.linspace(0.05, 0.95, 19):
            assert iso_analytic_rectangle(w, v) == pytest.approx(iso_analytic_rectangle(w, 1 - v))


def test_analytic_placements():
    sets = AnalyticSet.placements(UNIT, 0.25)
    assert len(sets) == 12
    for s in sets:
        assert s.volume == 0.25
    disk = AnalyticSet(UNIT, "quarter_disk", "ll", 0.2)
    assert disk.perimeter == pytest.approx(math.sqrt(0.2 * math.pi))
    assert disk.curvature == pytest.approx(1.0 / disk.radius)
    assert alpha_analytic(disk, disk.with_volume(0.25)) == 0.0
    far = AnalyticSet(UNIT, "quarter_disk", "ur", 0.2)
    assert alpha_analytic(disk, far) == pytest.approx(0.2, abs=5e-3)


# ---------- derivatives and semi-concavity ----------

def test_one_sided_smooth_branch():
    prof = iso_profile_from_function(lambda v: math.sqrt(math.pi * v), geometric_offsets(0.25))
    d_minus, d_plus = one_sided_derivatives(prof, 0.25)
    assert d_minus == pytest.approx(1.772454, abs=1e-5)
    assert d_plus == pytest.approx(1.772454, abs=1e-5)


def test_one_sided_rectangle_crossover():
    vstar = 1 / math.pi
    prof = iso_profile_rectangle(UNIT, geometric_offsets(vstar))
    d_minus, d_plus = one_sided_derivatives(prof, vstar)
    assert d_minus == pytest.approx(math.pi / 2, abs=1e-5)
    assert d_plus == pytest.approx(0.0, abs=1e-10)
    assert prof.derivatives[vstar] == (d_minus, d_plus)


def test_one_sided_linear_and_insufficient():
    prof = iso_profile_from_function(lambda v: 3.0 * v + 1.0, geometric_offsets(0.4))
    assert_allclose(one_sided_derivatives(prof, 0.4), (3.0, 3.0), rtol=1e-9)
    sparse = iso_profile_from_function(lambda v: v, [0.3, 0.4, 0.5, 0.6])
    with pytest.raises(IsoperimetryError):
        one_sided_derivatives(sparse, 0.4)


def test_semiconcavity():
    vols = np.linspace(0.1, 0.3, 21)
    concave = iso_profile_from_function(lambda v: math.sqrt(math.pi * v), vols)
    assert semiconcavity_estimate(concave, (0.1, 0.3)) == 0.0
    square = iso_profile_from_function(lambda v: v * v, vols)
    assert semiconcavity_estimate(square, (0.1, 0.3)) == pytest.approx(2.0, abs=1e-8)
    kinked = iso_profile_rectangle(UNIT, np.linspace(0.2, 0.45, 26))
    c = semiconcavity_estimate(kinked, (0.2, 0.45))
    assert math.isfinite(c) and c >= 0.0
    with pytest.raises(IsoperimetryError):
        semiconcavity_estimate(square, (0.1, 0.12))


# ---------- level sets ----------

def test_level_sets_of_exact_indicator():
    dom = PixelDomain.rectangle(6, 6)
    E0 = random_region(dom, 12, np.random.default_rng(4))
    u = np.where(E0.mask, -1.0, 1.0)
    for delta in (0.0, 0.3):
        check = level_set_alpha_check(u, E0, delta, -1.0, 1.0)
        assert check.status == "pass"
        assert bool(check)


def test_level_sets_random_perturbations():
    dom = PixelDomain.rectangle(12, 12)
    rng = np.random.default_rng(8)
    a, b = -1.0, 1.0
    for _ in range(1000):
        E0 = random_region(dom, int(rng.integers(1, 144)), rng)
        delta = float(rng.uniform(0.0, 0.3))
        p = rng.normal(size=dom.shape) * (rng.random(dom.shape) < 0.3)
        if not p.any():
            continue
        p *= (b - a) * delta / (np.abs(p).sum() * dom.h ** 2)
        u = np.where(E0.mask, a, b) + p
        check = level_set_alpha_check(u, E0, delta, a, b)
        assert check.status == "pass", check.to_dict()


def test_level_sets_hypothesis_gate():
    dom = PixelDomain.rectangle(6, 6)
    E0 = random_region(dom, 10, np.random.default_rng(9))
    u = np.where(E0.mask, 1.0, -1.0)
    check = level_set_alpha_check(u, E0, 0.1, -1.0, 1.0)
    assert check.status == "hypothesis not met"
    assert not check


# ---------- erosion ----------

def test_erosion():
    dom = PixelDomain.rectangle(10, 10)
    assert np.array_equal(erode(dom, 0.0).mask, dom.mask)
    assert erode(dom, 0.1).measure == pytest.approx(0.64)
    measures = [erode(dom, t).measure for t in (0.0, 0.05, 0.1, 0.2, 0.3)]
    assert all(x >= y for x, y in zip(measures, measures[1:]))
    with pytest.raises(IsoperimetryError):
        erode(dom, 0.6)

    square = erode(UNIT, 0.1)
    assert (square.width, square.height) == pytest.approx((0.8, 0.8))
    assert erode(UNIT, 0.0) == UNIT


def test_eroded_bound():
    samples = list(np.linspace(0.05, 0.3, 11))
    report = eroded_iso_bound_check(UNIT, 0.05, samples)
    assert report.passed
    assert report.measured["C2"] > 0.0
    assert report.measured["excluded"] == 1
    plain = eroded_iso_bound_check(UNIT, 0.0, samples)
    assert 0.0 < plain.measured["C2"] <= math.sqrt(math.pi) + 1e-12


# ---------- curvature limit ----------

def test_curvature_limit_straight_cut():
    E0 = AnalyticSet(UNIT, "strip", "left", 0.5)
    report = curvature_limit_sweep(UNIT, E0, 0.0, [0.2, 0.05, 0.01])
    assert report.passed, report.to_dict()


def test_curvature_limit_quarter_disk():
    E0 = AnalyticSet(UNIT, "quarter_disk", "ll", 0.2)
    report = curvature_limit_sweep(UNIT, E0, E0.curvature, [0.1, 0.01])
    assert report.passed, report.to_dict()
    assert report.measured["target"] == pytest.approx(math.sqrt(math.pi / 0.2) / 2)


def test_curvature_bracket_at_crossover():
    E0 = AnalyticSet(UNIT, "quarter_disk", "ll", 1 / math.pi)
    report = curvature_limit_sweep(UNIT, E0, E0.curvature, [1.0, 0.01])
    wide, narrow = report.measured["sweep"]
    assert wide["D_minus"] == pytest.approx(math.pi / 2, abs=1e-4)
    assert wide["D_plus"] == pytest.approx(0.0, abs=1e-9)
    assert narrow["D_plus"] == pytest.approx(math.pi / 2, abs=1e-4)
    assert report.passed
