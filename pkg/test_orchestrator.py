"""
Tests for the scenario pipeline: stage order, store contents and the failure path.
Stage functions are swapped for mocks where the numerics are not the point.
"""

import math
from unittest import mock
from unittest.mock import MagicMock

import pytest

from cli import DEFAULT_CONFIG, load_config, scenario_config
from orchestrator import STAGES, StageError, run_scenario
from report import ValidationReport
from results import ResultStore
from weight import WeightError


def scenario(**overrides):
    base = {
        "name": "test",
        "seed": 0,
        "potential": {"kind": "quartic"},
        "domain": {"kind": "rectangle", "width": 1.0, "height": 1.0},
        "geometry": {"kappa": 0.0, "perimeter": 1.0, "vm": 0.5},
        "weight": {"source": "flat"},
        "ladder": [0.04, 0.02, 0.01],
        "weighted1d": {"mesh_richardson": False},
    }
    base.update(overrides)
    return base


def test_stage_failure_keeps_partial_store(tmp_path):
    constants = MagicMock(return_value={"c_W": 4.0 / 3.0})
    weight = MagicMock(side_effect=WeightError("need s- >= s+"))
    predict = MagicMock(return_value={})
    with mock.patch.dict(STAGES, {"constants": constants, "weight": weight, "predict": predict}):
        with pytest.raises(StageError, match="weight") as info:
            run_scenario(scenario(stages=["constants", "weight", "predict"]), tmp_path)

    assert isinstance(info.value.cause, WeightError)
    predict.assert_not_called()
    store = ResultStore(tmp_path)
    records = store.records()
    assert [(r["stage"], r["status"]) for r in records] == [("constants", "ok"), ("weight", "failed")]
    assert "need s- >= s+" in records[1]["error"]
    assert "**completed**" in (tmp_path / "SUMMARY.md").read_text()
    assert (tmp_path / "manifest.json").exists()


def test_stages_run_in_declared_order(tmp_path):
    calls = []
    fake = {name: MagicMock(side_effect=lambda ctx, n=name: calls.append(n) or {"stage": n})
            for name in ("constants", "iso", "predict")}
    with mock.patch.dict(STAGES, fake):
        store = run_scenario(scenario(stages=["iso", "constants", "predict"]), tmp_path)
    assert calls == ["iso", "constants", "predict"]
    assert store.latest("predict") == {"stage": "predict"}


def test_unknown_stage(tmp_path):
    with pytest.raises(StageError, match="unknown stage"):
        run_scenario(scenario(stages=["teleport"]), tmp_path)


def test_missing_prerequisite_is_reported(tmp_path):
    with pytest.raises(StageError, match="weight stage"):
        run_scenario(scenario(stages=["minimize1d"]), tmp_path)
    assert ResultStore(tmp_path).records()[-1]["status"] == "failed"


def test_rect_crossover_ranking(tmp_path):
    cfg = scenario_config(load_config(DEFAULT_CONFIG), "rect-crossover")
    cfg["stages"] = ["predict"]
    store = run_scenario(cfg, tmp_path)
    ranking = store.read_table("predict_ranking")
    assert [r["label"] for r in ranking] == ["quarter_disk", "strip"]
    assert ranking[0]["F2"] == pytest.approx(-math.pi ** 2 / 36.0, abs=1e-8)
    assert store.latest("predict")["winner"] == "quarter_disk"


def test_flat_pipeline(tmp_path):
    store = run_scenario(scenario(stages=["constants", "weight", "minimize1d", "predict"]), tmp_path)
    assert store.latest("constants")["constants"]["c_W"] == pytest.approx(4.0 / 3.0, abs=1e-10)
    ladder = store.read_table("gap_ladder")
    assert [r["eps"] for r in ladder] == [0.04, 0.02, 0.01]
    assert all(r["rhs"] == pytest.approx(0.0, abs=1e-10) for r in ladder)
    assert store.latest("predict")["keystone"]["passed"]
    assert set(store.tables()) == {"profile", "gap_ladder", "snapshots", "predict_ranking"}


def test_same_seed_same_outputs(tmp_path):
    cfg = scenario(stages=["constants", "predict"])
    one = run_scenario(cfg, tmp_path / "one")
    two = run_scenario(cfg, tmp_path / "two")
    for name in ("records.jsonl", "tables/profile.csv", "tables/predict_ranking.csv"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()
    assert one.manifest()["config_sha256"] == two.manifest()["config_sha256"]


def test_rerun_summary_covers_only_its_own_run(tmp_path):
    cfg = scenario(stages=["weight"])
    with mock.patch.dict(STAGES, {"weight": MagicMock(side_effect=WeightError("boom"))}):
        with pytest.raises(StageError):
            run_scenario(cfg, tmp_path)
    ok = ValidationReport("weight eta")
    ok.add("eta4", True, 0.0, tol=0.0)
    with mock.patch.dict(STAGES, {"weight": MagicMock(return_value={"validation": ok.to_dict()})}):
        store = run_scenario(cfg, tmp_path)

    summary = (tmp_path / "SUMMARY.md").read_text()
    assert "boom" not in summary
    assert "**completed**" not in summary
    first, second = store.run_ids()
    assert first.endswith("-1") and second.endswith("-2")
    assert summary.startswith(f"# Scenario test (run {second})")
    # records stay append-only across runs
    assert [r["status"] for r in store.records()] == ["failed", "ok"]
    assert store.manifest()["run_id"] == second
    assert store.manifest()["score"] == 100.0


@pytest.mark.slow
def test_builtin_flat_scenario(tmp_path):
    cfg = scenario_config(load_config(DEFAULT_CONFIG), "flat")
    store = run_scenario(cfg, tmp_path)
    assert len(store.read_table("gap_ladder")) == 4
    assert (tmp_path / "plots" / "gap_vs_eps.svg").exists()
    assert store.verify_manifest(cfg)


@pytest.mark.slow
def test_builtin_rect_crossover_scenario(tmp_path):
    cfg = scenario_config(load_config(DEFAULT_CONFIG), "rect-crossover")
    store = run_scenario(cfg, tmp_path)
    assert store.latest("iso")["D_minus"] == pytest.approx(math.pi / 2, rel=1e-4)
    assert store.latest("predict")["winner"] == "quarter_disk"
    assert (tmp_path / "plots" / "touching.svg").exists()
