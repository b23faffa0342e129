import json
import math

import numpy as np
import pytest

from lifisim.errors import InputError
from lifisim.harness import (FIXED_CONFIGURATIONS, ExperimentConfig, _cutoff_key, ecdf,
                             evaluate_scene, export_report, fixed_configurations,
                             random_scene, run_fixed, run_monte_carlo)


@pytest.fixture(scope="module")
def fixed_c1_c2():
    return run_fixed(ExperimentConfig(configurations=("C1", "C2")))


def test_fixed_configurations_build():
    scenes = fixed_configurations()
    assert set(scenes) == {c.name for c in FIXED_CONFIGURATIONS}
    for per in scenes.values():
        assert set(per) == {"sitting", "walking"}


def test_fixed_records(fixed_c1_c2):
    recs = {(r["configuration"], r["activity"]): r for r in fixed_c1_c2.records}
    assert len(recs) == 4
    c2w = recs[("C2", "walking")]
    assert not c2w["los_exists"] and c2w["los_ratio"] == 0.0
    assert math.isnan(c2w["penalty_db_40"]) and math.isfinite(c2w["snr_t_db_40"])
    c1s = recs[("C1", "sitting")]
    assert c1s["los_exists"] and 0 < c1s["los_ratio"] < 1
    assert c1s["penalty_db_40"] > 0
    assert c1s["snr_t_db_20"] > c1s["snr_t_db_40"]
    assert math.isclose(c1s["h_cir_dc"], c1s["h_los_dc"] + c1s["h_diff_dc"])


def test_rho_zero_removes_penalty():
    rep = run_fixed(ExperimentConfig(configurations=("C1",), activities=("sitting",),
                                     rho_override=0.0))
    r = rep.records[0]
    assert r["h_diff_dc"] == 0.0 and r["los_ratio"] == 1.0
    assert abs(r["penalty_db_40"]) < 1e-6


def test_config_validation_and_hash():
    with pytest.raises(InputError):
        ExperimentConfig(scenario="x")
    with pytest.raises(InputError):
        ExperimentConfig(configurations=("C9",))
    with pytest.raises(InputError):
        ExperimentConfig.from_dict({"bogus": 1})
    a = ExperimentConfig(seed=3, workers=1)
    b = ExperimentConfig.from_dict(dict(a.to_dict(), workers=4))
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != ExperimentConfig(seed=4).config_hash()


def test_random_scene_constraints():
    rng = np.random.default_rng(0)
    for activity in ("sitting", "walking"):
        for _ in range(50):
            s = random_scene(activity, rng)
            assert 0 <= s.ue.polar <= math.pi / 2
            assert s.room.contains(s.ue.position)
            lo, hi = s.room.bounds
            c = s.body.corners()
            assert np.all(c >= lo[:2] - 1e-9) and np.all(c <= hi[:2] + 1e-9)


def test_ecdf():
    v = [1.0, 2.0, float("nan"), 2.0, 5.0]
    assert np.allclose(ecdf(v, [0, 1, 2, 4, 5]), [0, 0.25, 0.75, 0.75, 1.0])
    assert np.all(np.isnan(ecdf([float("nan")], [0, 1])))


def test_monte_carlo_small_and_deterministic(tmp_path):
    cfg = ExperimentConfig(scenario="montecarlo", n_samples=3, seed=5, resolution=1)
    a = run_monte_carlo(cfg)
    b = run_monte_carlo(cfg)
    assert len(a.records) == 6 and not a.failures
    assert json.dumps(a.records) == json.dumps(b.records)  # nan-safe comparison
    for act in ("sitting", "walking"):
        agg = a.aggregates[act]
        assert agg["n_samples"] == 3 and 0 <= agg["p_los"] <= 1
    files = export_report(a, tmp_path / "mc")
    summary = json.loads(open(files["summary"]).read())
    assert summary["seed"] == 5 and summary["config_hash"] == cfg.config_hash()
    assert "cdf_penalty_walking_40mhz" in files


def test_export_fixed_uses_dash_for_undefined(tmp_path, fixed_c1_c2):
    files = export_report(fixed_c1_c2, tmp_path / "fx")
    lines = open(files["records"]).read().splitlines()
    header = lines[0].split(",")
    col = header.index("penalty_db_40")
    c2w = [ln.split(",") for ln in lines[1:] if ln.startswith("C2,walking")][0]
    assert c2w[col] == "-"


def test_evaluate_scene_keys():
    scene = fixed_configurations()["C3"]["walking"]
    rec = evaluate_scene(scene, ExperimentConfig(led_cutoffs_mhz=(40.0,), resolution=1))
    assert {"psi_deg", "snr_t_db_40", "penalty_db_40", "n_elements"} <= set(rec)
    assert "snr_t_db_20" not in rec


def test_penalties_bounded_on_all_fixed_scenes():
    rep = run_fixed(ExperimentConfig())
    assert len(rep.records) == 10
    for r in rep.records:
        for mhz in ExperimentConfig().led_cutoffs_mhz:
            key = f"penalty_db_{_cutoff_key(mhz)}"
            if r["los_exists"]:
                assert math.isfinite(r[key]) and abs(r[key]) < 20, (r["configuration"], key)
            else:
                assert math.isnan(r[key])
