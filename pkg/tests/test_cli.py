import csv
import json
from pathlib import Path


from itimap.bursts import FeatureVector, LabeledBurst, write_dataset
from itimap.cli import main
from itimap.maps import InterferenceReport, ReportEntry, read_reports, write_reports
from itimap.scene import Technology

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _cfg(tmp_path, **over):
    d = {"scenario": str(CONFIGS / "empty_scenario.json"), "seed": 1,
         "nodes": [{"id": 0, "x": 5, "y": 5}, {"id": 1, "x": 15, "y": 5}, {"id": 2, "x": 10, "y": 15}]}
    d.update(over)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(d))
    return str(p)


def test_usage_errors_exit_1(tmp_path, capsys):
    assert main([]) == 1
    assert main(["simulate", "--tech", "lte"]) == 1
    assert main(["simulate", "--channels", "3,17"]) == 1
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 1
    assert main(["simulate", "--config", _cfg(tmp_path, bogus=1)]) == 1
    assert main(["train-eval", "--config", _cfg(tmp_path), "--out", str(tmp_path),
                 "--dataset", str(tmp_path / "none.csv")]) == 1
    assert "config error" in capsys.readouterr().err


def test_seed_is_mandatory(tmp_path, capsys):
    assert main(["simulate", "--config", _cfg(tmp_path, seed=None), "--out", str(tmp_path / "o")]) == 1
    assert "seed" in capsys.readouterr().err


def test_zero_emitter_simulate(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["simulate", "--config", _cfg(tmp_path), "--out", str(out)]) == 0
    assert (out / "dataset.csv").read_text().splitlines() == ["f1,f2,f3,f4,f5,f6,f7,f8,label"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["bursts_generated"] == summary["bursts_labeled"] == 0
    assert "duty cycle 0.16" in capsys.readouterr().out
    # an empty dataset cannot be trained on
    assert main(["train-eval", "--config", _cfg(tmp_path), "--out", str(out)]) == 2


def test_single_class_dataset_rejected(tmp_path, capsys):
    rows = [LabeledBurst(FeatureVector.from_array([1000.0 + i, -60, -60, 0, 0, 40, 40, 0]), Technology.Ble) for i in range(20)]
    write_dataset(rows, tmp_path / "one.csv")
    code = main(["train-eval", "--config", _cfg(tmp_path), "--out", str(tmp_path / "o"),
                 "--dataset", str(tmp_path / "one.csv")])
    assert code == 2
    assert "need ≥ 2 classes" in capsys.readouterr().err


def test_train_eval_outputs(tmp_path, default_rows, capsys):
    write_dataset(default_rows[0], tmp_path / "d.csv")
    cfg = _cfg(tmp_path, seed=42, classifier={"speed_repeats": 0})
    out = tmp_path / "o"
    assert main(["train-eval", "--config", cfg, "--out", str(out), "--dataset", str(tmp_path / "d.csv")]) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    labels = [m["label"] for m in metrics["models"]]
    assert labels == ["CT(s=5)", "CT(s=20)", "CT(s=50)", "CT(s=200)", "RF(30)", "kNN(5)"]
    ab = metrics["ablation"]
    assert {"accuracy_with_sf", "accuracy_without_sf"} <= set(ab) and ab["max_splits"] == 20
    with open(out / "frontier.csv") as f:
        assert [r["label"] for r in csv.DictReader(f)] == labels
    with open(out / "recall.csv") as f:
        assert next(csv.reader(f))[1:] == [t.name for t in Technology]
    assert not (out / "timing.csv").exists()
    assert json.loads((out / "model.json").read_text())["kind"] == "tree"
    assert "SF ablation" in capsys.readouterr().out


def test_missing_tech_is_no_data(tmp_path, capsys):
    code = main(["map", "--config", str(CONFIGS / "doubling.json"), "--out", str(tmp_path), "--tech", "ble",
                 "--window", "0,120"])
    assert code == 2
    assert "no data in window" in capsys.readouterr().err


def test_unknown_spectrogram_node(tmp_path, capsys):
    assert main(["spectrogram", "--config", _cfg(tmp_path), "--out", str(tmp_path / "o"), "--node", "9"]) == 2


def test_fast_forward_spectrogram_rows(tmp_path, capsys):
    out = tmp_path / "ff"
    assert main(["spectrogram", "--config", str(CONFIGS / "fast_forward.json"), "--out", str(out)]) == 0
    for kind in ("power", "busy"):
        lines = (out / f"spectrogram_node0_wlan_{kind}.csv").read_text().splitlines()
        assert len(lines) - 1 == 42 * 4  # 42 h at 900 s bins
    assert "168 bins of 900 s" in capsys.readouterr().out


def test_report_codec_round_trip(tmp_path, capsys):
    rs = [InterferenceReport(3, 7, 35_000, (ReportEntry(2, Technology.Wlan11n, 4, -71, 3300),)),
          InterferenceReport(4, 7, 35_000, (), True)]
    write_reports(rs, tmp_path / "r.bin")
    assert main(["report-codec", "decode", str(tmp_path / "r.bin")]) == 0
    (tmp_path / "r.json").write_text(capsys.readouterr().out)
    assert main(["report-codec", "encode", str(tmp_path / "r.json"), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "reports.bin").read_bytes() == (tmp_path / "r.bin").read_bytes()
    assert read_reports(tmp_path / "o" / "reports.bin") == rs


def test_report_codec_bad_inputs(tmp_path, capsys):
    (tmp_path / "bad.bin").write_bytes(b"\x05\xa5\x02\x00")
    assert main(["report-codec", "decode", str(tmp_path / "bad.bin")]) == 2
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["report-codec", "encode", str(tmp_path / "bad.json"), "--out", str(tmp_path)]) == 2
    assert main(["report-codec", "decode", str(tmp_path / "nope.bin")]) == 1
