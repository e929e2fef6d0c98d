import json
import os
import re
from pathlib import Path

import pytest

from calprompt import cli, io
from calprompt.core import (
    CalibratorSpec,
    PriorProfile,
    TaskManifest,
    ValidationError,
)
from calprompt.fewshot import TrainConfig

from conftest import make_record


META_RE = re.compile(r"^# engine=calprompt/0\.1\.0 method=\S+ config=[0-9a-f]{12}")


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


def test_records_round_trip(tmp_path, small_records):
    path = tmp_path / "records.jsonl"
    io.write_records(path, small_records)
    back = io.load_records(path)
    assert tuple(back) == tuple(small_records)


def test_records_language_key_round_trip(tmp_path):
    rec = make_record(0, 1, (0.1, 0.8))
    rec = type(rec)(example_id=rec.example_id, gold=rec.gold, probs=rec.probs,
                    split=rec.split, language="sw")
    path = tmp_path / "records.jsonl"
    io.write_records(path, [rec])
    raw = path.read_text().splitlines()
    assert '"language": "sw"' in raw[-1] or '"language":"sw"' in raw[-1]
    assert io.load_records(path)[0].language == "sw"


def test_records_meta_first_line_skipped(tmp_path, small_records):
    path = tmp_path / "records.jsonl"
    io.write_records(path, small_records, meta={"source": "unit-test"})
    first = path.read_text().splitlines()[0]
    assert json.loads(first).keys() == {"_meta"}
    assert len(io.load_records(path)) == len(small_records)


def test_records_malformed_lines_reported_with_numbers(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(
        '{"example_id": "a", "gold": 0, "probs": [0.5, 0.4], "split": "test"}\n'
        "not json at all\n"
        '{"example_id": "b", "gold": 7, "probs": [0.5, 0.4], "split": "test"}\n'
        '{"example_id": "c", "gold": 0, "probs": [0.5, 0.4], "split": "weird"}\n'
    )
    with pytest.raises(ValidationError) as exc:
        io.load_records(path)
    msg = str(exc.value)
    assert ":2:" in msg and ":3:" in msg and ":4:" in msg
    assert "malformed JSON" in msg


def test_records_rejects_bool_gold_and_string_probs(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(
        '{"example_id": "a", "gold": true, "probs": [0.5, 0.4], "split": "test"}\n'
        '{"example_id": "b", "gold": 0, "probs": ["0.5", 0.4], "split": "test"}\n'
    )
    with pytest.raises(ValidationError) as exc:
        io.load_records(path)
    msg = str(exc.value)
    assert ":1:" in msg and ":2:" in msg


def test_records_empty_file_rejected(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with pytest.raises(ValidationError):
        io.load_records(path)


def test_manifest_round_trip_json(tmp_path, binary_manifest):
    path = tmp_path / "manifest.json"
    io.write_manifest(path, binary_manifest)
    assert io.load_manifest(path) == binary_manifest


def test_manifest_toml(tmp_path):
    path = tmp_path / "manifest.toml"
    path.write_text(
        'task = "amazon_polarity"\n'
        'labels = ["neg", "pos"]\n'
        'label_words = ["bad", "good"]\n'
        'template_id = "amazon-p"\n'
        'metric = "accuracy"\n'
        "balanced = true\n"
    )
    m = io.load_manifest(path)
    assert m.task == "amazon_polarity"
    assert m.labels == ("neg", "pos")
    assert m.metric == "accuracy"


def test_manifest_unknown_key_rejected(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({
        "task": "t", "labels": ["a", "b"], "label_words": ["x", "y"],
        "template_id": "tp", "metric": "accuracy", "balanced": True,
        "extra": 1,
    }))
    with pytest.raises(ValidationError, match="extra"):
        io.load_manifest(path)


def test_manifest_metric_convention_gate(tmp_path):
    payload = {"task": "t", "labels": ["a", "b"], "label_words": ["x", "y"],
               "template_id": "tp", "metric": "accuracy", "balanced": False}
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(ValidationError):
        io.load_manifest(path)
    m = io.load_manifest(path, enforce_metric_convention=False)
    assert m.metric == "accuracy"


def test_priors_round_trip_and_errors(tmp_path, binary_priors):
    path = tmp_path / "priors.json"
    io.write_priors(path, binary_priors)
    assert io.load_priors(path) == binary_priors

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"mask_only": [0.5, 0.5]}))
    with pytest.raises(ValidationError):
        io.load_priors(bad)
    bad.write_text(json.dumps({"mask_only": [0.5, 0.5],
                               "empty_template": [0.5, 0.5], "junk": 1}))
    with pytest.raises(ValidationError):
        io.load_priors(bad)


@pytest.mark.parametrize("spec", [
    CalibratorSpec(method="none"),
    CalibratorSpec(method="cc", cc_w=(12.5, 1.0869565217391304), cc_b=(0.0, 0.0)),
    CalibratorSpec(method="pmi_dc"),
    CalibratorSpec(method="cbm", cbm_means=(0.6, 0.4)),
    CalibratorSpec(method="penalty", penalty=(0.08, -0.08)),
])
def test_calibrator_round_trip(tmp_path, spec):
    path = tmp_path / "calib.json"
    io.write_calibrator(path, spec)
    assert io.load_calibrator(path) == spec


def test_calibrator_float_fields_survive_exactly(tmp_path):
    vals = (0.1 + 0.2, 1 / 3, 2 ** -45)
    spec = CalibratorSpec(method="penalty", penalty=vals)
    path = tmp_path / "calib.json"
    io.write_calibrator(path, spec)
    assert io.load_calibrator(path).penalty == vals


def test_calibrator_irrelevant_field_rejected(tmp_path):
    path = tmp_path / "calib.json"
    path.write_text(json.dumps({"method": "penalty", "cc_w": [1.0, 1.0]}))
    with pytest.raises(ValidationError):
        io.load_calibrator(path)


def test_ingest_round_trip(bundle_files):
    records_path, manifest_path, priors_path = bundle_files
    bundle = io.ingest(records_path, manifest_path, priors_path)
    assert bundle.manifest.task == "amazon_polarity"
    assert len(bundle.train_records) == 8
    assert len(bundle.test_records) == 4
    assert all(r.split == "train" for r in bundle.train_records)
    assert all(r.split == "test" for r in bundle.test_records)


def test_ingest_rejects_duplicate_ids(tmp_path, binary_manifest, binary_priors):
    records = [make_record(1, 0, (0.5, 0.4), split="train"),
               make_record(1, 1, (0.4, 0.5), split="test")]
    rp, mp, pp = tmp_path / "r.jsonl", tmp_path / "m.json", tmp_path / "p.json"
    io.write_records(rp, records)
    io.write_manifest(mp, binary_manifest)
    io.write_priors(pp, binary_priors)
    with pytest.raises(ValidationError, match="ex0001"):
        io.ingest(rp, mp, pp)


def test_ingest_rejects_width_mismatch(tmp_path, binary_manifest, binary_priors):
    records = [make_record(0, 0, (0.3, 0.3, 0.3))]
    rp, mp, pp = tmp_path / "r.jsonl", tmp_path / "m.json", tmp_path / "p.json"
    io.write_records(rp, records)
    io.write_manifest(mp, binary_manifest)
    io.write_priors(pp, binary_priors)
    with pytest.raises(ValidationError):
        io.ingest(rp, mp, pp)


def test_atomic_write_replaces_not_truncates(tmp_path):
    path = tmp_path / "out.txt"
    path.write_text("old")
    io.atomic_write_text(path, "new contents")
    assert path.read_text() == "new contents"
    leftovers = [p for p in tmp_path.iterdir() if p.name != "out.txt"]
    assert leftovers == []


def test_config_hash_stable_and_order_insensitive():
    a = io.config_hash({"x": 1, "y": [1, 2], "z": "s"})
    b = io.config_hash({"z": "s", "y": [1, 2], "x": 1})
    assert a == b
    assert re.fullmatch(r"[0-9a-f]{12}", a)
    assert io.config_hash({"x": 2, "y": [1, 2], "z": "s"}) != a


def test_csv_meta_line_format(tmp_path, small_records, binary_manifest):
    path = tmp_path / "scores.csv"
    scores = [[0.1, 0.9], [0.2, 0.8], [0.9, 0.1], [0.8, 0.2]]
    preds = [1, 1, 0, 0]
    io.write_scores_csv(path, binary_manifest, small_records, scores, preds,
                        "penalty", {"eta": 1e-4})
    lines = path.read_text().splitlines()
    assert META_RE.match(lines[0])
    assert lines[1] == "example_id,gold,pred,score_neg,score_pos"
    assert lines[2].startswith("ex0000,1,1,0.1,0.9")


def test_sweep_csv_contains_best_line(tmp_path):
    grid = [(0.0, 0.5), (0.5, 0.5), (0.96, 1.0), (1.0, 0.5)]
    path = tmp_path / "sweep.csv"
    io.write_sweep_csv(path, grid, best_tau=0.96, best_accuracy=1.0,
                       method="none", cfg={})
    text = path.read_text()
    lines = text.splitlines()
    assert META_RE.match(lines[0])
    assert "best_tau=0.96" in lines[0]
    assert "best_accuracy=1.0" in lines[0]
    assert lines[1] == "tau,accuracy"
    assert "0.96,1.0" in lines


def test_float_formatting_round_trips(tmp_path):
    grid = [(0.07, 1 / 3)]
    path = tmp_path / "sweep.csv"
    io.write_sweep_csv(path, grid, best_tau=0.07, best_accuracy=1 / 3,
                       method="none", cfg={})
    row = path.read_text().splitlines()[2]
    tau_s, acc_s = row.split(",")
    assert float(tau_s) == 0.07
    assert float(acc_s) == 1 / 3


# ---------------------------------------------------------------------------
# CLI (in-process)
# ---------------------------------------------------------------------------


def test_cli_validate_ok(bundle_files, capsys):
    rc = cli.main(["validate", *map(str, bundle_files)])
    out = capsys.readouterr().out
    assert rc == 0
    assert out.startswith("OK:")
    assert "train=8" in out and "test=4" in out


def test_cli_validate_bad_bundle(tmp_path, capsys):
    missing = tmp_path / "nope.jsonl"
    rc = cli.main(["validate", str(missing), str(missing), str(missing)])
    err = capsys.readouterr().err
    assert rc == 1
    assert err.startswith("error:")


def test_cli_validate_malformed_records(tmp_path, bundle_files, capsys):
    _, manifest_path, priors_path = bundle_files
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{}\n")
    rc = cli.main(["validate", str(bad), str(manifest_path), str(priors_path)])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_cli_calibrate_writes_scores(tmp_path, bundle_files, capsys):
    out = tmp_path / "scores.csv"
    rc = cli.main(["calibrate", *map(str, bundle_files),
                   "--method", "penalty", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert META_RE.match(lines[0])
    assert lines[1] == "example_id,gold,pred,score_neg,score_pos"
    assert len(lines) == 2 + 4


def test_cli_calibrate_with_trained_calibrator_file(tmp_path, bundle_files):
    calib = tmp_path / "calib.json"
    io.write_calibrator(calib, CalibratorSpec(method="penalty", penalty=(0.0, 0.0)))
    out = tmp_path / "scores.csv"
    rc = cli.main(["calibrate", *map(str, bundle_files),
                   "--calibrator", str(calib), "--out", str(out)])
    assert rc == 0
    assert "method=penalty" in out.read_text().splitlines()[0]


def test_cli_train_deterministic_reruns(tmp_path, bundle_files):
    out1, out2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
    args = ["train", *map(str, bundle_files), "--methods", "penalty", "cc",
            "--seeds", "42", "421", "--shots", "1", "2", "--epochs", "3"]
    assert cli.main(args + ["--out-report", str(out1)]) == 0
    assert cli.main(args + ["--out-report", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    header = out1.read_text().splitlines()
    assert META_RE.match(header[0])
    assert header[1] == "method,shots,seeds,mean,std,values"


def test_cli_train_shots_total_divisibility(bundle_files, tmp_path, capsys):
    out = tmp_path / "r.csv"
    rc = cli.main(["train", *map(str, bundle_files), "--methods", "penalty",
                   "--seeds", "42", "--shots", "3", "--shots-total",
                   "--out-report", str(out)])
    assert rc == 1
    assert "divisible" in capsys.readouterr().err

    rc = cli.main(["train", *map(str, bundle_files), "--methods", "penalty",
                   "--seeds", "42", "--shots", "4", "--shots-total",
                   "--epochs", "2", "--out-report", str(out)])
    assert rc == 0
    body = out.read_text()
    assert ",2," in body  # 4 total over 2 labels = 2 per class


def test_cli_train_saves_calibrators(tmp_path, bundle_files):
    out = tmp_path / "r.csv"
    calib_dir = tmp_path / "calibs"
    rc = cli.main(["train", *map(str, bundle_files), "--methods", "penalty",
                   "--seeds", "42", "--shots", "1", "--epochs", "2",
                   "--out-report", str(out), "--save-calibrators", str(calib_dir)])
    assert rc == 0
    saved = io.load_calibrator(calib_dir / "penalty.calibrator.json")
    assert saved.method == "penalty"
    assert saved.penalty is not None


def test_cli_evaluate_json_report(tmp_path, bundle_files, capsys):
    out = tmp_path / "report.json"
    rc = cli.main(["evaluate", *map(str, bundle_files),
                   "--method", "penalty", "--out", str(out)])
    assert rc == 0
    payload = json.loads(out.read_text())
    assert payload["task"] == "amazon_polarity"
    assert payload["metric"] == "accuracy"
    assert payload["method"] == "penalty"
    assert payload["n"] == 4
    assert 0.0 <= payload["value"] <= 1.0
    assert len(payload["confusion"]) == 2
    stdout = capsys.readouterr().out
    assert "accuracy" in stdout


def test_cli_sweep_fixture_row(tmp_path, binary_manifest, binary_priors, capsys):
    records = [make_record(0, 1, (0.02, 0.97)), make_record(1, 0, (0.04, 0.95))]
    rp, mp, pp = tmp_path / "r.jsonl", tmp_path / "m.json", tmp_path / "p.json"
    io.write_records(rp, records)
    io.write_manifest(mp, binary_manifest)
    io.write_priors(pp, binary_priors)
    out = tmp_path / "sweep.csv"
    rc = cli.main(["sweep", str(rp), str(mp), str(pp), "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert "0.96,1.0" in lines
    assert "best_tau=0.96" in lines[0]
    stdout = capsys.readouterr().out
    assert "0.96" in stdout


def test_cli_sweep_rejects_nonbinary(tmp_path, binary_priors, capsys):
    manifest = TaskManifest("t3", ("a", "b", "c"), ("x", "y", "z"), "tp",
                            "accuracy", balanced=True)
    records = [make_record(0, 1, (0.2, 0.3, 0.2))]
    rp, mp, pp = tmp_path / "r.jsonl", tmp_path / "m.json", tmp_path / "p.json"
    io.write_records(rp, records)
    io.write_manifest(mp, manifest)
    io.write_priors(pp, PriorProfile(mask_only=(0.2, 0.3, 0.5),
                                     empty_template=(0.3, 0.3, 0.4)))
    rc = cli.main(["sweep", str(rp), str(mp), str(pp),
                   "--out", str(tmp_path / "s.csv")])
    assert rc == 1
    assert "binary" in capsys.readouterr().err


def test_cli_analyze_builtin_outputs(tmp_path):
    out_dir = tmp_path / "analysis"
    rc = cli.main(["analyze", "--out-dir", str(out_dir)])
    assert rc == 0
    names = sorted(p.name for p in out_dir.iterdir())
    assert "deltas.csv" in names
    assert "groups_family_penalty.csv" in names
    assert "groups_accessibility_penalty.csv" in names
    assert "groups_family_cbm.csv" in names
    deltas = (out_dir / "deltas.csv").read_text().splitlines()
    assert deltas[1] == "language,method,baseline,calibrated,delta"
    assert any(row.startswith("af,penalty,40.4,64.3,") for row in deltas)
    fam = (out_dir / "groups_family_penalty.csv").read_text().splitlines()
    assert fam[1] == "group,n,min,q1,median,q3,max,mean"
    assert sum(1 for r in fam[2:] if r) == 4


def test_cli_analyze_pooled(tmp_path):
    out_dir = tmp_path / "analysis"
    rc = cli.main(["analyze", "--out-dir", str(out_dir), "--pool"])
    assert rc == 0
    pooled = out_dir / "groups_family_pooled.csv"
    assert pooled.exists()
    rows = [r for r in pooled.read_text().splitlines()[2:] if r]
    # two methods pool 2n values per family; same four families survive
    assert len(rows) == 4
    for row in rows:
        assert int(row.split(",")[1]) >= 6


def test_cli_analyze_strict_languages_errors(tmp_path, capsys):
    rc = cli.main(["analyze", "--out-dir", str(tmp_path / "x"),
                   "--strict-languages"])
    assert rc == 1
    assert "en" in capsys.readouterr().err


def test_cli_internal_error_exit_2(monkeypatch, bundle_files, capsys):
    def boom(args):
        raise RuntimeError("synthetic failure")
    monkeypatch.setattr(cli, "cmd_validate", boom)
    rc = cli.main(["validate", *map(str, bundle_files)])
    assert rc == 2
    assert "internal error" in capsys.readouterr().err


def test_cli_usage_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["train", "--bogus-flag"])
    assert exc.value.code == 2


def test_cli_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    assert "0.1.0" in capsys.readouterr().out


def test_cli_renormalize_and_strict_flags(tmp_path, bundle_files):
    out = tmp_path / "scores.csv"
    rc = cli.main(["calibrate", *map(str, bundle_files), "--method", "cbm",
                   "--renormalize", "--out", str(out)])
    assert rc == 0
    assert out.exists()


def test_train_config_payload_reproducible():
    cfg = TrainConfig(epochs=3, learning_rate=1e-4, seed=42, shots_per_class=2)
    p1 = io.train_config_payload(cfg, ["penalty"], (42,), (1, 2))
    p2 = io.train_config_payload(cfg, ["penalty"], (42,), (1, 2))
    assert io.config_hash(p1) == io.config_hash(p2)
