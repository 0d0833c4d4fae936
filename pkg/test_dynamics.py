"""
Tests for the conserved Allen-Cahn / Cahn-Hilliard steppers and the slow-motion runs.
"""

import math
from unittest import mock

import numpy as np
import pytest

from dynamics import (
    DiskGeometry,
    DynamicsError,
    Field2D,
    SimConfig,
    StripGeometry,
    h1_dual_norm,
    l1_distance,
    load_checkpoint,
    lyapunov_energy,
    refinement_check,
    run_flow,
    save_checkpoint,
    slow_motion_experiment,
    step_ac,
    step_ch,
    two_phase_field,
    well_prepared_init,
)

C_W = 4.0 / 3.0


def random_field(rng, n=20, h=0.05, mean=0.0, scale=0.3):
    return Field2D(mean + scale * rng.standard_normal((n, n)), h)


# ---------- norms ----------

def test_dual_norm_examples():
    h = 0.05
    assert h1_dual_norm(Field2D(np.zeros((20, 20)), h)) == 0.0
    assert h1_dual_norm(Field2D(np.ones((20, 20)), h)) == pytest.approx(1.0, rel=1e-12)
    f = random_field(np.random.default_rng(3))
    assert h1_dual_norm(f.with_values(2 * f.u)) == pytest.approx(2 * h1_dual_norm(f), rel=1e-12)
    assert h1_dual_norm(f) <= math.sqrt((f.u ** 2).sum() * h * h) + 1e-12


def test_l1_against_sharp_set(quartic):
    cfg = SimConfig(eps=0.1, potential=quartic)
    ref = two_phase_field(StripGeometry(0.5), cfg)
    assert ref.mass() == pytest.approx(0.0, abs=1e-12)
    assert l1_distance(ref.with_values(np.where(ref.info["inside"] > 0.5, -1.0, 1.0)), ref) == pytest.approx(0.0)
    assert l1_distance(ref.with_values(np.zeros(cfg.shape)), ref) == pytest.approx(1.0)


# ---------- steppers ----------

@pytest.mark.parametrize("flow", ["ac", "ch"])
def test_constants_are_stationary(quartic, flow):
    cfg = SimConfig(eps=0.1, potential=quartic, flow=flow)
    for value in (-1.0, 0.0, 0.3):
        u = Field2D(np.full(cfg.shape, value), cfg.h)
        for _ in range(5):
            u = step_ac(u, cfg) if flow == "ac" else step_ch(u, cfg)
        np.testing.assert_allclose(u.u, value, atol=1e-13)


@pytest.mark.parametrize("flow,mass_tol", [("ac", 1e-10), ("ch", 1e-12)])
def test_mass_and_energy_over_many_steps(quartic, flow, mass_tol):
    cfg = SimConfig(eps=0.1, potential=quartic, flow=flow)
    rng = np.random.default_rng(11)
    u = random_field(rng, n=cfg.shape[0], h=cfg.h, mean=0.2)
    m0 = u.mass()
    stepper = step_ac if flow == "ac" else step_ch
    dt = cfg.dt_rule
    energy = lyapunov_energy(u, cfg.eps, cfg.boxed)
    worst = 0.0
    for _ in range(10_000):
        u = stepper(u, cfg, dt)
        new = lyapunov_energy(u, cfg.eps, cfg.boxed)
        worst = max(worst, new - energy)
        energy = new
    assert abs(u.mass() - m0) <= mass_tol
    assert worst <= 1e-10


def test_plain_allen_cahn_loses_mass(quartic):
    cfg = SimConfig(eps=0.1, potential=quartic, conserve_mass=False)
    u = random_field(np.random.default_rng(5), n=cfg.shape[0], h=cfg.h, mean=0.3, scale=0.05)
    m0 = u.mass()
    for _ in range(100):
        u = step_ac(u, cfg)
    assert abs(u.mass() - m0) > 1e-3


def test_config_rules(quartic):
    cfg = SimConfig(eps=0.02, potential=quartic)
    assert cfg.shape == (100, 100)
    assert cfg.h == pytest.approx(0.01)
    assert cfg.dt_rule == pytest.approx(min(0.01 ** 2 / (8 * 0.02 ** 2), 0.1 / cfg.curvature_bound))
    assert SimConfig(eps=0.02, potential=quartic, flow="ch").dt_rule == pytest.approx(0.01)
    with pytest.raises(DynamicsError, match="stability"):
        SimConfig(eps=0.02, potential=quartic, dt=1.0)
    with pytest.raises(DynamicsError):
        SimConfig(eps=0.02, potential=quartic, flow="heat")
    steps, dt = SimConfig(eps=0.1, potential=quartic, M=0.5).schedule()
    assert steps * dt == pytest.approx(5.0)


def test_non_finite_step_reports_index(quartic):
    cfg = SimConfig(eps=0.1, potential=quartic, M=0.1)
    u0 = Field2D(np.zeros(cfg.shape), cfg.h)
    with mock.patch("dynamics.idctn", return_value=np.full(cfg.shape, np.nan)):
        with pytest.raises(DynamicsError, match="step 1"):
            run_flow(u0, cfg)


# ---------- initial data and runs ----------

def test_well_prepared_disk(quartic, quartic_profile):
    cfg = SimConfig(eps=0.02, potential=quartic)
    disk = DiskGeometry.with_area(0.2)
    u0 = well_prepared_init(disk, cfg, quartic_profile, m=0.6)
    assert u0.info["mass_residual"] <= 1e-12
    assert u0.info["energy_over_eps"] == pytest.approx(2 * C_W * disk.perimeter, rel=3e-2)
    assert abs(u0.info["mass_correction"]) < 1e-6


def test_mass_mismatch_is_rejected(quartic, quartic_profile):
    cfg = SimConfig(eps=0.05, potential=quartic)
    with pytest.raises(DynamicsError, match="mass correction"):
        well_prepared_init(DiskGeometry.with_area(0.2), cfg, quartic_profile, m=-0.9)


def test_zero_horizon_reports_initial_distance(quartic, quartic_profile):
    cfg = SimConfig(eps=0.05, potential=quartic, M=0.0)
    disk = DiskGeometry.with_area(0.2)
    u0 = well_prepared_init(disk, cfg, quartic_profile)
    ref = two_phase_field(disk, cfg)
    res = run_flow(u0, cfg, reference=ref)
    assert res.steps == 0
    assert res.sup_l1 == l1_distance(u0, ref)
    assert res.sup_dual == h1_dual_norm(u0.with_values(u0.u - ref.u))


def test_checkpoint_round_trip(tmp_path, quartic):
    u = random_field(np.random.default_rng(2), n=12, h=1 / 12)
    save_checkpoint(tmp_path / "run" / "state", u, t=1.5, eps=0.1, step=30)
    back, header = load_checkpoint(tmp_path / "run" / "state")
    np.testing.assert_array_equal(back.u, u.u)
    assert (header["t"], header["eps"], header["step"], back.h) == (1.5, 0.1, 30, u.h)
    (tmp_path / "run" / "state.bin").write_bytes(b"\0" * 16)
    with pytest.raises(DynamicsError, match="header"):
        load_checkpoint(tmp_path / "run" / "state")


def test_checkpoints_written_during_run(tmp_path, quartic):
    cfg = SimConfig(eps=0.1, potential=quartic, M=0.2)
    u0 = random_field(np.random.default_rng(4), n=cfg.shape[0], h=cfg.h, scale=0.1)
    res = run_flow(u0, cfg, checkpoint_dir=tmp_path, checkpoint_every=1)
    assert len(list(tmp_path.glob("*.bin"))) == res.steps


# ---------- slow-motion ladders ----------

@pytest.mark.slow
def test_allen_cahn_disk_ladder(quartic, quartic_profile):
    disk = DiskGeometry.with_area(0.2)
    out = slow_motion_experiment(disk, quartic, quartic_profile, [0.08, 0.04, 0.02], M=1.0,
                                 flow="ac", threads=3)
    assert out.report.passed, out.report.failures()
    assert all(r >= 1.5 for r in out.ratios)
    assert [row["eps"] for row in out.rows()] == [0.08, 0.04, 0.02]

    strip = slow_motion_experiment(StripGeometry(0.2), quartic, quartic_profile, [0.02], M=1.0)
    assert strip.runs[0.02].sup_l1 < 10 * out.runs[0.02].sup_l1


@pytest.mark.slow
def test_cahn_hilliard_strip_ladder(quartic, quartic_profile):
    out = slow_motion_experiment(StripGeometry(0.2), quartic, quartic_profile, [0.08, 0.04, 0.02],
                                 M=1.0, flow="ch")
    assert out.report.checks["mass_conserved"].passed
    assert out.report.checks["energy_nonincreasing"].passed
    drifts = out.report.measured["drift"]
    assert drifts[0] > drifts[1] > drifts[2]


@pytest.mark.slow
def test_grid_refinement_gate(quartic, quartic_profile):
    report = refinement_check(DiskGeometry.with_area(0.2), quartic, quartic_profile, 0.08)
    assert report.passed, report.measured
