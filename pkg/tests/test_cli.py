import csv
import json
from pathlib import Path

import numpy as np
import pytest

from sts.cli import main
from sts.classifier.inference import ClipClassification, write_classifications
from sts.ingest import BBox3D, BBox3DTrack, write_bbox_track
from sts.labels import StSClass

SMALL = {"version": 1, "house_id": "h", "duration_weeks": 3, "event_week": 1,
         "weekly_v_soa_schedule": [0.4, 0.3, 0.35], "forced_counts": True,
         "class_mix": {"Sit-to-Stand": 2, "Stand-to-Sit": 1, "Other": 2}, "seed": 5}
TINY_NET = {"stack_filters": [4, 8], "lstm_units": 6, "input_shape": [8, 8, 8], "pseudo_time_steps": 4,
            "feature_dim": 32, "temporal_pool_after": [0]}
REPORT_KEYS = {"n_clips", "n_measurements", "n_skipped", "epoch", "event_date", "direction", "trend",
               "accuracy", "manual_trend", "correlation"}


def _files(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def house(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "scenario.json"
    cfg.write_text(json.dumps(SMALL))
    assert main(["synth", "--config", str(cfg), "--out", str(root / "house")]) == 0
    return root / "house"


def test_synth_writes_dataset(house, capsys):
    assert (house / "labels.csv").exists() and (house / "ground_truth.csv").exists()
    with open(house / "ground_truth.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3 * 5
    assert sorted({int(r["week_index"]) for r in rows}) == [0, 1, 2]


def test_synth_byte_identical(house, tmp_path):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps(SMALL))
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "again")]) == 0
    assert _files(tmp_path / "again") == _files(house)


def test_synth_seed_flag_changes_data(house, tmp_path):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps(SMALL))
    assert main(["synth", "--config", str(cfg), "--seed", "6", "--out", str(tmp_path / "other")]) == 0
    assert (tmp_path / "other" / "ground_truth.csv").read_bytes() != (house / "ground_truth.csv").read_bytes()


def test_report_with_oracle(house, tmp_path):
    out = tmp_path / "rep"
    assert main(["report", "--data", str(house), "--oracle", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary) == REPORT_KEYS
    assert summary["correlation"] == pytest.approx(1.0, abs=1e-12)
    assert summary["accuracy"]["overall"] == 1.0 and summary["accuracy"]["false_positive_rate"] == 0.0
    assert (out / "automatic" / "trend.csv").read_bytes() == (out / "manual" / "trend.csv").read_bytes()
    assert summary["event_date"] == "2020-01-13"
    svg = (out / "automatic" / "trend.svg").read_text()
    assert svg.count('class="marker"') == 3 and svg.count('class="event"') == 1


def test_report_byte_identical(house, tmp_path):
    for name in ("a", "b"):
        assert main(["report", "--data", str(house), "--oracle", "--out", str(tmp_path / name)]) == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "b")


def test_stage_chain_with_trained_model(house, tmp_path):
    cfg = tmp_path / "net.json"
    cfg.write_text(json.dumps({"version": 1, "network": TINY_NET, "train": {"epochs": 1, "batch": 4}}))
    model = tmp_path / "model"
    assert main(["train", "--config", str(cfg), "--data", str(house), "--out", str(model)]) == 0
    assert (model / "model.ckpt").exists() and (model / "checkpoints" / "epoch_001.ckpt").exists()
    log = json.loads((model / "train_log.json").read_text())
    assert len(log) == 1 and np.isfinite(log[0]["loss"])

    cls = tmp_path / "cls"
    assert main(["classify", "--data", str(house), "--model", str(model / "model.ckpt"), "--out", str(cls)]) == 0
    lines = (cls / "classifications.csv").read_text().splitlines()
    assert len(lines) == 1 + 15
    assert main(["measure", "--data", str(house), "--classifications", str(cls / "classifications.csv"),
                 "--out", str(tmp_path / "m")]) == 0
    assert (tmp_path / "m" / "measurements.csv").exists()

    rep = tmp_path / "rep"
    assert main(["report", "--data", str(house), "--model", str(model / "model.ckpt"), "--out", str(rep)]) == 0
    assert set(json.loads((rep / "summary.json").read_text())) == REPORT_KEYS


def test_trend_subcommand(house, tmp_path, capsys):
    cls = tmp_path / "cls"
    assert main(["classify", "--data", str(house), "--oracle", "--out", str(cls)]) == 0
    m = tmp_path / "m"
    assert main(["measure", "--data", str(house), "--classifications", str(cls / "classifications.csv"),
                 "--out", str(m)]) == 0
    capsys.readouterr()
    out = tmp_path / "t"
    assert main(["trend", "--measurements", str(m / "measurements.csv"), "--epoch", "2020-01-06",
                 "--event-date", "2020-01-13", "--out", str(out)]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["weeks"] == 3 and stats["r2"] is not None
    assert (out / "trend.csv").exists() and (out / "trend.svg").exists()


def test_validate_needs_two_houses(house, tmp_path, capsys):
    assert main(["validate", "--data", str(house), "--out", str(tmp_path / "v")]) == 2
    assert "two" in capsys.readouterr().err


def test_measure_short_track_is_skipped(tmp_path):
    data = tmp_path / "d"
    (data / "tracks").mkdir(parents=True)
    t = np.arange(8) / 10.0
    write_bbox_track(data / "tracks" / "short.csv",
                     BBox3DTrack("short", [BBox3D(float(x), 0.2, 1.2 + 0.05 * float(x), 0.1, -0.2, 0.0, -0.1)
                                           for x in t]))
    write_classifications(tmp_path / "c.csv", [ClipClassification("short#0", StSClass.SitToStand, (1.0, 0.0, 0.0))])
    assert main(["measure", "--data", str(data), "--classifications", str(tmp_path / "c.csv"),
                 "--out", str(tmp_path / "m")]) == 0
    skipped = (tmp_path / "m" / "skipped.csv").read_text().splitlines()
    assert skipped[0] == "clip_id,reason" and skipped[1].startswith("short#0,")
    assert (tmp_path / "m" / "measurements.csv").read_text().count("\n") == 1


def test_missing_input_exit_2(tmp_path, capsys):
    assert main(["measure", "--data", str(tmp_path), "--classifications", str(tmp_path / "nope.csv"),
                 "--out", str(tmp_path / "m")]) == 2
    assert "nope.csv" in capsys.readouterr().err
    assert main(["classify", "--data", str(tmp_path), "--model", str(tmp_path / "m.ckpt"),
                 "--out", str(tmp_path / "c")]) == 2
    assert main(["synth", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "s")]) == 2


def test_invalid_scenario_exit_2(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"version": 1, "duration_weeks": 2, "weekly_v_soa_schedule": [0.4]}))
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 2
    assert "invalid scenario" in capsys.readouterr().err
    cfg.write_text(json.dumps({"version": 7}))
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 2
    cfg.write_text("{not json")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 2


def test_stage_failure_exit_1(house, tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    assert main(["report", "--data", str(house), "--model", str(bad), "--out", str(tmp_path / "r")]) == 1
    assert "stage classify" in capsys.readouterr().err


def test_help_and_bad_usage(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    assert "report" in capsys.readouterr().out
    with pytest.raises(SystemExit) as exc:
        main(["trend", "--measurements", "x.csv", "--epoch", "not-a-date", "--out", "o"])
    assert exc.value.code == 2


def test_validate_emits_folds(house, tmp_path):
    from sts.classifier.checkpoint import load_checkpoint
    from sts.evaluation import ConfusionMatrix3

    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps({**SMALL, "house_id": "g", "seed": 8}))
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "g")]) == 0
    net = tmp_path / "net.json"
    net.write_text(json.dumps({"version": 1, "network": TINY_NET, "train": {"epochs": 1, "batch": 4}}))
    out = tmp_path / "v"
    assert main(["validate", "--config", str(net), "--data", str(house), str(tmp_path / "g"), "--out", str(out)]) == 0
    report = json.loads((out / "crossval.json").read_text())
    assert [f["held_out"] for f in report["folds"]] == ["house", "g"]
    for f in report["folds"]:
        cm = ConfusionMatrix3.read_csv(out / f"confusion_{f['held_out']}.csv")
        assert abs(cm.overall() - f["overall"]) <= 1e-12
        assert load_checkpoint(out / f"model_without_{f['held_out']}.ckpt").config.input_shape == (8, 8, 8)
