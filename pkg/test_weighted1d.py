"""
Tests for the weighted 1D minimization and the limit formulas along an eps-ladder.
"""

import math
from dataclasses import replace
from types import SimpleNamespace
from unittest import mock

import numpy as np
import pytest

from isoperimetry import Rectangle
from weight import WeightFunction, build_eta, build_touching_iso, smooth_touching_iso, solve_V
from weighted1d import (
    SolverError,
    WeightedField,
    build_grid,
    energy_G,
    extract_lambda_limit,
    extrapolate_gap,
    gamma_limit_value,
    layer_bump,
    minimize_Geps,
    multiplier_consistency,
    rescaled_profile_distance,
    richardson_extrapolate,
    run_ladder,
    solve_tau0,
    gap_limit_rhs,
)

C_W = 4.0 / 3.0
LADDER = [0.04, 0.02, 0.01, 0.005]


@pytest.fixture(scope="module")
def flat():
    return WeightFunction.flat(0.5)


@pytest.fixture(scope="module")
def smooth_eta():
    iso = smooth_touching_iso(1.0, 1.0, 0.5)
    return build_eta(iso, solve_V(iso))


# ---------- discretization ----------

def test_grid_layout(flat):
    eps = 2.0 ** -5
    t = build_grid(flat, eps)
    assert t[0] == -0.5 and t[-1] == 0.5
    assert 0.0 in t
    np.testing.assert_allclose(t, -t[::-1], atol=1e-15)
    mid = len(t) // 2
    assert t[mid + 1] - t[mid] == pytest.approx(eps / 400, rel=1e-9)
    assert np.max(np.diff(t)) <= 1.51 * 5e-3


def test_energy_of_simple_fields(flat, quartic, quartic_profile):
    eps = 2.0 ** -5
    t = build_grid(flat, eps)
    assert energy_G(WeightedField(t, np.full_like(t, -1.0), flat), eps, quartic) == 0.0
    assert energy_G(WeightedField(t, np.zeros_like(t), flat), eps, quartic) == pytest.approx(1.0, abs=1e-12)
    layer = WeightedField(t, quartic_profile(t / eps), flat)
    assert energy_G(layer, eps, quartic) == pytest.approx(2 * C_W * eps, rel=1e-4)


def test_gamma_limit_value(flat, quartic):
    t = build_grid(flat, 0.05)
    v = np.where(t < 0.0, -1.0, 1.0)
    assert gamma_limit_value(t, v, flat, quartic) == pytest.approx(8.0 / 3.0, rel=1e-10)
    with pytest.raises(SolverError, match="single jump"):
        gamma_limit_value(t, np.where(np.abs(t) < 0.2, 1.0, -1.0), flat, quartic)
    with pytest.raises(SolverError, match="two-valued"):
        gamma_limit_value(t, np.zeros_like(t), flat, quartic)


# ---------- single minimizations ----------

def test_flat_weight_minimizer(flat, quartic, quartic_profile):
    eps = 2.0 ** -8
    res = minimize_Geps(flat, eps, quartic, prof=quartic_profile)
    assert res.residual <= 1e-9
    assert res.mass_residual <= 1e-10
    assert abs(res.lam) <= 1e-6
    assert abs(res.gap) <= 1e-3 * C_W
    v = res.field.v
    assert np.max(np.abs(v + v[::-1])) <= 1e-8
    assert res.local_ok


def test_multiplier_matches_tested_equation(smooth_eta, quartic, quartic_profile):
    res = minimize_Geps(smooth_eta, 0.02, quartic, prof=quartic_profile)
    assert multiplier_consistency(res, quartic) == pytest.approx(res.lam_raw, abs=1e-6)
    assert res.lam > 0.0


def test_layer_bump_follows_a_shifted_interface(flat, quartic, quartic_profile):
    s = 0.2
    shifted = replace(
        flat, A=flat.A + s, B=flat.B + s, t0=s,
        eta=lambda t: flat.eta(np.asarray(t) - s),
        deta=lambda t: flat.deta(np.asarray(t) - s),
        cumulative=lambda t: flat.cumulative(np.asarray(t) - s),
    )
    res = minimize_Geps(shifted, 0.02, quartic, prof=quartic_profile, mesh_richardson=False)
    bump = layer_bump(res)
    t = res.field.t
    assert t[np.argmax(bump)] == pytest.approx(s + res.tau * res.eps, abs=1e-4)
    assert np.interp(0.0, t, bump) < 1e-4
    assert multiplier_consistency(res, quartic) == pytest.approx(res.lam_raw, abs=1e-6)


def test_locality_violation_is_flagged(flat, quartic, quartic_profile, caplog):
    res = minimize_Geps(flat, 0.05, quartic, prof=quartic_profile, locality=1e-8)
    assert not res.local_ok
    assert "locality" in caplog.text


def test_singular_newton_system_raises(flat, quartic, quartic_profile):
    with mock.patch("weighted1d.spsolve", side_effect=lambda J, rhs: np.full_like(rhs, np.nan)):
        with pytest.raises(SolverError, match="singular"):
            minimize_Geps(flat, 0.05, quartic, init=lambda t: np.tanh(3 * t), mesh_richardson=False)


def test_initial_state_is_required(flat, quartic):
    with pytest.raises(SolverError):
        minimize_Geps(flat, 0.05, quartic)


def test_window_outside_grid_raises(flat, quartic, quartic_profile):
    res = minimize_Geps(flat, 2.0 ** -4, quartic, prof=quartic_profile, mesh_richardson=False)
    with pytest.raises(SolverError, match="exceeds"):
        rescaled_profile_distance(res, quartic_profile, 0.0, window=100.0)


# ---------- limit formulas ----------

def test_tau0_and_rhs_for_smooth_weight(smooth_eta, quartic, quartic_profile):
    tau0 = solve_tau0(smooth_eta, quartic, quartic_profile, 4.0 / 3.0)
    assert tau0 == pytest.approx(-1.0 / 12.0, abs=1e-8)
    rhs = gap_limit_rhs(smooth_eta, quartic, quartic_profile, 4.0 / 3.0, tau0)
    assert rhs == pytest.approx(-1.0 / 9.0, abs=1e-6)


def test_rhs_vanishes_without_slopes(flat, quartic, quartic_profile):
    assert gap_limit_rhs(flat, quartic, quartic_profile, 0.0, 0.0) == pytest.approx(0.0, abs=1e-10)


def test_richardson_recovers_polynomial_limit():
    eps = [0.04, 0.02, 0.01]
    values = [2.0 + 3.0 * e - e * e for e in eps]
    assert richardson_extrapolate(eps, values) == pytest.approx(2.0, abs=1e-10)
    assert richardson_extrapolate(eps + [0.005], values + [2.0 + 0.015 - 2.5e-5], order=2) == pytest.approx(2.0, abs=1e-10)
    with pytest.raises(ValueError):
        richardson_extrapolate([0.1], [1.0], order=1)


def test_noisy_lambda_sequence_is_not_extrapolated(smooth_eta, quartic):
    fake = [SimpleNamespace(eps=e, lam=l) for e, l in zip(LADDER, [1.2, 1.4, 1.25, 1.3])]
    limit = extract_lambda_limit(fake, smooth_eta, quartic, c_w=C_W)
    assert not limit.extrapolated
    assert limit.value == 1.3
    assert limit.bracket == pytest.approx((4.0 / 3.0, 4.0 / 3.0))


# ---------- eps-ladders ----------

@pytest.mark.slow
def test_smooth_weight_ladder(smooth_eta, quartic, quartic_profile):
    results = run_ladder(smooth_eta, quartic, quartic_profile, LADDER)
    assert [r.eps for r in results] == sorted(LADDER, reverse=True)
    assert all(r.residual <= 1e-9 and r.local_ok for r in results)

    limit = extract_lambda_limit(results, smooth_eta, quartic)
    assert limit.value == pytest.approx(4.0 / 3.0, rel=1e-2)
    assert limit.inside

    gap = extrapolate_gap(results)
    assert gap == pytest.approx(-1.0 / 9.0, rel=5e-2)

    tau0 = solve_tau0(smooth_eta, quartic, quartic_profile, 4.0 / 3.0)
    dist = [rescaled_profile_distance(r, quartic_profile, tau0, window=4.0) for r in results]
    assert dist[-1] < dist[0]


@pytest.mark.slow
def test_kinked_weight_ladder(quartic, quartic_profile):
    square = Rectangle(1.0, 1.0)
    vstar = 1.0 / math.pi
    vols = np.append(np.linspace(0.001, 0.999, 999), vstar)
    reference = (vols, np.array([square.iso(v) for v in vols]))
    iso = build_touching_iso(1.0, math.pi / 2, 0.0, 1.0, 0.05, reference, vstar)
    eta = build_eta(iso, solve_V(iso))

    results = run_ladder(eta, quartic, quartic_profile, LADDER)
    limit = extract_lambda_limit(results, eta, quartic)
    lo, hi = limit.bracket
    assert lo == pytest.approx(0.0, abs=1e-12)
    assert hi == pytest.approx(2 * C_W * (math.pi / 2) / 2, rel=1e-6)
    assert lo - 1e-2 <= limit.value <= hi + 1e-2

    tau0 = solve_tau0(eta, quartic, quartic_profile, limit.value)
    rhs = gap_limit_rhs(eta, quartic, quartic_profile, limit.value, tau0)
    assert extrapolate_gap(results) >= rhs - 0.05 * abs(rhs)
