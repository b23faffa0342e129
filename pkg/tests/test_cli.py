import csv
import json

import numpy as np
import pytest
import yaml

from lifisim.channel import ChannelResponse
from lifisim.cli import main
from lifisim.orientation import SampledSeries


def test_cir_and_link(tmp_path, capsys):
    ch = tmp_path / "ch.csv"
    assert main(["cir", "--activity", "sitting", "--resolution", "1", "--full-grid",
                 "--out", str(ch)]) == 0
    r = ChannelResponse.from_csv(ch)
    assert len(r.freqs) == 65 and r.dc("los") > 0
    capsys.readouterr()
    assert main(["link", "--channel", str(ch), "--out", str(tmp_path / "link.csv")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["mode"] == "full" and abs(doc["average_ber"] / 3.8e-3 - 1) < 1e-4


def test_simulate_writes_rows(tmp_path):
    ch = tmp_path / "ch.csv"
    main(["cir", "--resolution", "1", "--full-grid", "--out", str(ch)])
    out = tmp_path / "sim.csv"
    assert main(["simulate", "--channel", str(ch), "--snr-db", "20", "24",
                 "--bits", "5e4", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 2 and float(rows[0]["ber_sim"]) > float(rows[1]["ber_sim"])


def test_orientation_round_trip(tmp_path, capsys):
    series = tmp_path / "s.csv"
    assert main(["--seed", "4", "orient-gen", "--activity", "walking", "--duration", "60",
                 "--out", str(series)]) == 0
    s = SampledSeries.from_csv(series)
    assert 1500 <= len(s) <= 4500
    capsys.readouterr()
    assert main(["orient-estimate", "--input", str(series),
                 "--periodogram", str(tmp_path / "p.csv")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["detected"] and abs(doc["frequency_hz"] - 1.86) < 0.05


def test_fixed_and_montecarlo(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"experiment": {"configurations": ["C3"],
                                                  "led_cutoffs_mhz": [40]}}))
    assert main(["--config", str(cfg), "fixed", "--resolution", "1",
                 "--out", str(tmp_path / "fx")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "fx" / "records.csv")))
    assert [r["activity"] for r in rows] == ["sitting", "walking"]
    assert main(["--seed", "2", "montecarlo", "--samples", "2", "--resolution", "1",
                 "--out", str(tmp_path / "mc")]) == 0
    summary = json.loads((tmp_path / "mc" / "summary.json").read_text())
    assert summary["seed"] == 2 and summary["n_records"] == 4


def test_errors_return_two(tmp_path, capsys):
    assert main(["cir", "--anchor", "9", "9", "--out", str(tmp_path / "x.csv")]) == 2
    assert "error" in capsys.readouterr().err
    bad = tmp_path / "bad.yaml"
    bad.write_text("- just a list\n")
    assert main(["--config", str(bad), "fixed", "--out", str(tmp_path / "o")]) == 2
    with pytest.raises(SystemExit):
        main(["nonsense"])


def test_scene_from_config(tmp_path, capsys):
    cfg = tmp_path / "scene.yaml"
    cfg.write_text(yaml.safe_dump({"scene": {"activity": "sitting", "user": {
        "anchor": [-0.33, 0.35], "direction_deg": -90}}}))
    out = tmp_path / "c.csv"
    assert main(["--config", str(cfg), "cir", "--resolution", "1", "--out", str(out)]) == 0
    r = ChannelResponse.from_csv(out)
    assert np.abs(r.h_los[0]) > 0


def test_orient_gen_angles_independent(tmp_path):
    paths = {}
    for angle in ("theta", "omega"):
        paths[angle] = tmp_path / f"{angle}.csv"
        assert main(["--seed", "9", "orient-gen", "--activity", "walking", "--angle", angle,
                     "--duration", "60", "--out", str(paths[angle])]) == 0
    a = SampledSeries.from_csv(paths["theta"])
    b = SampledSeries.from_csv(paths["omega"])
    assert np.array_equal(a.times, b.times)
    r = np.corrcoef(a.values, b.values)[0, 1]
    assert abs(r) < 3 / np.sqrt(len(a))
