"""File formats and ingestion.

Formats, bit-exactly:

* records: one JSON object per line, UTF-8, LF line endings.  Keys:
  example_id (string), gold (int), probs (list of float), split
  ("train"/"test", default "test"), language (string, optional).  An
  optional first line holding a single {"_meta": {...}} object is treated
  as a header and skipped.
* manifest / config: one JSON or TOML document (extension decides; .toml
  is TOML, everything else is tried as JSON first).
* priors: JSON object with keys mask_only and empty_template (lists of
  float), optional _meta.
* calibrator: JSON object with key method plus that method's parameter
  lists, optional _meta.
* tabular outputs: CSV whose first line is a comment of the form
  "# engine=calprompt/<version> method=<m> config=<12-hex-digest>".

Floats are serialized in decimal with Python's shortest round-trip repr,
so writing and re-reading any value is exact.  All writes are atomic
(temp file in the target directory, then rename).
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import logging
import os
import sys
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from ._version import __version__
from .core import (
    CalibratorSpec,
    LabelProbRecord,
    PriorProfile,
    TaskManifest,
    ValidationError,
)
from .fewshot import EvalReport, TrainConfig
from .multilingual import DeltaReport

log = logging.getLogger("calprompt")

ENGINE = f"calprompt/{__version__}"

if sys.version_info >= (3, 11):
    import tomllib
else:  # py3.10
    import tomli as tomllib


def config_hash(payload: Mapping[str, Any]) -> str:
    """12-hex-digit digest of a canonical JSON rendering of the config."""
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def _meta_line(method: str, cfg: Mapping[str, Any]) -> str:
    return f"# engine={ENGINE} method={method} config={config_hash(cfg)}"


def _fmt(x: float) -> str:
    return repr(float(x))


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Readers
# ---------------------------------------------------------------------------

_RECORD_KEYS = {"example_id", "gold", "probs", "split", "language"}


def _record_from_obj(obj: Any, where: str, problems: list[str]) -> LabelProbRecord | None:
    if not isinstance(obj, dict):
        problems.append(f"{where}: expected a JSON object, got {type(obj).__name__}")
        return None
    unknown = set(obj) - _RECORD_KEYS
    if unknown:
        problems.append(f"{where}: unknown keys {sorted(unknown)}")
        return None
    try:
        example_id = obj["example_id"]
        gold = obj["gold"]
        probs = obj["probs"]
    except KeyError as exc:
        problems.append(f"{where}: missing key {exc.args[0]!r}")
        return None
    split = obj.get("split", "test")
    language = obj.get("language")
    if not isinstance(example_id, str):
        problems.append(f"{where}: example_id must be a string")
        return None
    if isinstance(gold, bool) or not isinstance(gold, int):
        problems.append(f"{where}: gold must be an integer")
        return None
    if not isinstance(probs, list) or not all(
        isinstance(p, (int, float)) and not isinstance(p, bool) for p in probs
    ):
        problems.append(f"{where}: probs must be a list of numbers")
        return None
    rec = LabelProbRecord(example_id=example_id, gold=gold,
                          probs=tuple(float(p) for p in probs),
                          split=split, language=language)
    try:
        rec.validate()
    except ValidationError as exc:
        problems.append(f"{where}: {exc}")
        return None
    return rec


def load_records(path: str | Path) -> list[LabelProbRecord]:
    """Parse a records JSONL file; collects every problem before failing."""
    path = Path(path)
    records: list[LabelProbRecord] = []
    problems: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            where = f"{path.name}:{lineno}"
            try:
                obj = json.loads(stripped)
            except json.JSONDecodeError as exc:
                problems.append(f"{where}: malformed JSON ({exc.msg})")
                continue
            if lineno == 1 and isinstance(obj, dict) and set(obj) == {"_meta"}:
                continue
            rec = _record_from_obj(obj, where, problems)
            if rec is not None:
                records.append(rec)
    if problems:
        raise ValidationError("; ".join(problems))
    if not records:
        raise ValidationError(f"{path.name}: no records found")
    return records


def _load_document(path: Path) -> dict:
    raw = path.read_bytes()
    if path.suffix.lower() == ".toml":
        return tomllib.loads(raw.decode("utf-8"))
    try:
        return json.loads(raw.decode("utf-8"))
    except json.JSONDecodeError:
        try:
            return tomllib.loads(raw.decode("utf-8"))
        except tomllib.TOMLDecodeError:
            raise ValidationError(f"{path.name}: neither valid JSON nor valid TOML") from None


def load_manifest(path: str | Path, *, enforce_metric_convention: bool = True) -> TaskManifest:
    path = Path(path)
    doc = _load_document(path)
    doc.pop("_meta", None)
    required = {"task", "labels", "label_words", "template_id", "metric", "balanced"}
    missing = required - set(doc)
    if missing:
        raise ValidationError(f"{path.name}: manifest missing keys {sorted(missing)}")
    unknown = set(doc) - required - {"language"}
    if unknown:
        raise ValidationError(f"{path.name}: manifest has unknown keys {sorted(unknown)}")
    manifest = TaskManifest(
        task=doc["task"],
        labels=tuple(doc["labels"]),
        label_words=tuple(doc["label_words"]),
        template_id=doc["template_id"],
        metric=doc["metric"],
        balanced=bool(doc["balanced"]),
        language=doc.get("language", "en"),
    )
    manifest.validate(enforce_metric_convention=enforce_metric_convention)
    return manifest


def load_priors(path: str | Path) -> PriorProfile:
    path = Path(path)
    doc = _load_document(path)
    doc.pop("_meta", None)
    if set(doc) != {"mask_only", "empty_template"}:
        raise ValidationError(
            f"{path.name}: priors must have exactly the keys mask_only and "
            f"empty_template, got {sorted(doc)}"
        )
    profile = PriorProfile(
        mask_only=tuple(float(p) for p in doc["mask_only"]),
        empty_template=tuple(float(p) for p in doc["empty_template"]),
    )
    profile.validate()
    return profile


def load_calibrator(path: str | Path) -> CalibratorSpec:
    path = Path(path)
    doc = _load_document(path)
    doc.pop("_meta", None)
    if "method" not in doc:
        raise ValidationError(f"{path.name}: calibrator file missing 'method'")
    as_tuple = lambda v: None if v is None else tuple(float(x) for x in v)
    spec = CalibratorSpec(
        method=doc["method"],
        cc_w=as_tuple(doc.get("cc_w")),
        cc_b=as_tuple(doc.get("cc_b")),
        penalty=as_tuple(doc.get("penalty")),
        cbm_means=as_tuple(doc.get("cbm_means")),
    )
    spec.validate()
    return spec


# ---------------------------------------------------------------------------
# RunBundle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunBundle:
    """One task's manifest, priors, partitioned records, and run config."""

    manifest: TaskManifest
    priors: PriorProfile
    train_records: tuple[LabelProbRecord, ...]
    test_records: tuple[LabelProbRecord, ...]
    config: TrainConfig
    methods: tuple[str, ...]

    @property
    def records(self) -> tuple[LabelProbRecord, ...]:
        return self.train_records + self.test_records

    def validate(self, *, enforce_metric_convention: bool = True) -> None:
        problems: list[str] = []
        num_labels = self.manifest.num_labels
        try:
            self.manifest.validate(enforce_metric_convention=enforce_metric_convention)
        except ValidationError as exc:
            problems.append(str(exc))
        try:
            self.priors.validate(num_labels)
        except ValidationError as exc:
            problems.append(str(exc))
        seen: dict[str, str] = {}
        for rec in self.records:
            if len(rec.probs) != num_labels:
                problems.append(
                    f"record {rec.example_id!r}: probs has {len(rec.probs)} entries, "
                    f"manifest defines {num_labels} labels"
                )
            if not (0 <= rec.gold < num_labels):
                problems.append(
                    f"record {rec.example_id!r}: gold {rec.gold} outside [0, {num_labels})"
                )
            prev = seen.get(rec.example_id)
            if prev is not None:
                problems.append(f"duplicate example_id {rec.example_id!r} ({prev} and {rec.split})")
            seen[rec.example_id] = rec.split
        if problems:
            raise ValidationError("; ".join(problems))


def ingest(
    records_path: str | Path,
    manifest_path: str | Path,
    priors_path: str | Path,
    *,
    config: TrainConfig | None = None,
    methods: Sequence[str] = ("penalty", "cc"),
    enforce_metric_convention: bool = True,
) -> RunBundle:
    """Load and cross-validate the three input files into a RunBundle."""
    manifest = load_manifest(manifest_path, enforce_metric_convention=enforce_metric_convention)
    priors = load_priors(priors_path)
    records = load_records(records_path)
    bundle = RunBundle(
        manifest=manifest,
        priors=priors,
        train_records=tuple(r for r in records if r.split == "train"),
        test_records=tuple(r for r in records if r.split == "test"),
        config=config if config is not None else TrainConfig(),
        methods=tuple(methods),
    )
    bundle.validate(enforce_metric_convention=enforce_metric_convention)
    log.info("ingested %d train / %d test records for task %s",
             len(bundle.train_records), len(bundle.test_records), manifest.task)
    return bundle


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------


def write_records(path: str | Path, records: Iterable[LabelProbRecord],
                  meta: Mapping[str, Any] | None = None) -> None:
    lines = []
    if meta is not None:
        lines.append(json.dumps({"_meta": dict(meta)}, sort_keys=True))
    for rec in records:
        obj: dict[str, Any] = {
            "example_id": rec.example_id,
            "gold": rec.gold,
            "probs": [float(p) for p in rec.probs],
            "split": rec.split,
        }
        if rec.language is not None:
            obj["language"] = rec.language
        lines.append(json.dumps(obj))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_manifest(path: str | Path, manifest: TaskManifest) -> None:
    obj = {
        "task": manifest.task,
        "labels": list(manifest.labels),
        "label_words": list(manifest.label_words),
        "template_id": manifest.template_id,
        "metric": manifest.metric,
        "balanced": manifest.balanced,
        "language": manifest.language,
    }
    atomic_write_text(path, json.dumps(obj, indent=2) + "\n")


def write_priors(path: str | Path, priors: PriorProfile,
                 meta: Mapping[str, Any] | None = None) -> None:
    obj: dict[str, Any] = {
        "mask_only": [float(p) for p in priors.mask_only],
        "empty_template": [float(p) for p in priors.empty_template],
    }
    if meta is not None:
        obj["_meta"] = dict(meta)
    atomic_write_text(path, json.dumps(obj, indent=2) + "\n")


def write_calibrator(path: str | Path, spec: CalibratorSpec,
                     meta: Mapping[str, Any] | None = None) -> None:
    obj: dict[str, Any] = {"method": spec.method}
    for field_name in ("cc_w", "cc_b", "penalty", "cbm_means"):
        value = getattr(spec, field_name)
        if value is not None:
            obj[field_name] = [float(x) for x in value]
    if meta is not None:
        obj["_meta"] = dict(meta)
    atomic_write_text(path, json.dumps(obj, indent=2) + "\n")


def _csv_text(header_comment: str, columns: Sequence[str],
              rows: Iterable[Sequence[Any]]) -> str:
    buf = _io.StringIO()
    buf.write(header_comment + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(c) if isinstance(c, float) else c for c in row])
    return buf.getvalue()


def write_scores_csv(
    path: str | Path,
    manifest: TaskManifest,
    records: Sequence[LabelProbRecord],
    scores: np.ndarray,
    preds: Sequence[int],
    method: str,
    cfg: Mapping[str, Any],
) -> None:
    """Per-record calibrated scores and predictions."""
    columns = ["example_id", "gold", "pred"] + [f"score_{name}" for name in manifest.labels]
    rows = []
    for rec, row, pred in zip(records, scores, preds):
        rows.append([rec.example_id, rec.gold, int(pred)] + [float(s) for s in row])
    atomic_write_text(path, _csv_text(_meta_line(method, cfg), columns, rows))


def write_sweep_csv(path: str | Path, grid: Sequence[tuple[float, float]],
                    best_tau: float, best_accuracy: float,
                    method: str, cfg: Mapping[str, Any]) -> None:
    header = _meta_line(method, cfg) + (
        f" best_tau={_fmt(best_tau)} best_accuracy={_fmt(best_accuracy)}"
    )
    rows = [[float(t), float(a)] for t, a in grid]
    atomic_write_text(path, _csv_text(header, ["tau", "accuracy"], rows))


def grid_report_rows(report: EvalReport) -> list[list[Any]]:
    rows: list[list[Any]] = [["none", 0, "", float(report.baseline), 0.0, _fmt(report.baseline)]]
    for cell in report.cells:
        rows.append([
            cell.method,
            cell.shots,
            ";".join(str(s) for s in cell.seeds),
            float(cell.mean),
            float(cell.std),
            ";".join(_fmt(v) for v in cell.values),
        ])
    return rows


def write_grid_csv(path: str | Path, report: EvalReport,
                   cfg: Mapping[str, Any]) -> None:
    methods = ",".join(dict.fromkeys(c.method for c in report.cells)) or "none"
    atomic_write_text(path, _csv_text(
        _meta_line(methods, cfg),
        ["method", "shots", "seeds", "mean", "std", "values"],
        grid_report_rows(report),
    ))


def render_grid_text(report: EvalReport) -> str:
    """Aligned text view of a training grid; values shown as percentages."""
    lines = [f"task: {report.task}   metric: {report.metric}",
             f"uncalibrated: {100 * report.baseline:.1f}"]
    width = max((len(c.method) for c in report.cells), default=4)
    by_method: dict[str, dict[int, str]] = {}
    shot_axis: list[int] = []
    for cell in report.cells:
        text = f"{100 * cell.mean:.1f}±{100 * cell.std:.1f}"
        by_method.setdefault(cell.method, {})[cell.shots] = text
        if cell.shots not in shot_axis:
            shot_axis.append(cell.shots)
    col = max([len("k=0")] + [12 for _ in shot_axis])
    header = " " * (width + 2) + "".join(f"{f'k={k}':>{col}}" for k in shot_axis)
    lines.append(header)
    for method, cells in by_method.items():
        row = f"{method:<{width}}  " + "".join(
            f"{cells.get(k, '-'):>{col}}" for k in shot_axis)
        lines.append(row)
    return "\n".join(lines) + "\n"


def write_delta_csv(path: str | Path, reports: Mapping[str, DeltaReport],
                    cfg: Mapping[str, Any]) -> None:
    """Per-language rows for one or more calibration methods."""
    rows = []
    for method in sorted(reports):
        for code, entry in sorted(reports[method].per_language.items()):
            rows.append([code, method, entry.baseline, entry.calibrated, entry.delta])
    atomic_write_text(path, _csv_text(
        _meta_line(",".join(sorted(reports)), cfg),
        ["language", "method", "baseline", "calibrated", "delta"],
        rows,
    ))


def write_group_csv(path: str | Path, report: DeltaReport,
                    method: str, cfg: Mapping[str, Any]) -> None:
    rows = [[group, n, mn, q1, med, q3, mx, mean]
            for group, n, mn, q1, med, q3, mx, mean in report.summary_rows()]
    atomic_write_text(path, _csv_text(
        _meta_line(method, cfg),
        ["group", "n", "min", "q1", "median", "q3", "max", "mean"],
        rows,
    ))


def render_group_text(report: DeltaReport, title: str) -> str:
    lines = [title]
    for group, n, mn, q1, med, q3, mx, mean in report.summary_rows():
        lines.append(
            f"  {group:<18} n={n:<3d} min={mn:7.2f}  q1={q1:7.2f}  "
            f"median={med:7.2f}  q3={q3:7.2f}  max={mx:7.2f}  mean={mean:7.2f}"
        )
    if report.skipped:
        lines.append(f"  skipped (not in table): {', '.join(report.skipped)}")
    return "\n".join(lines) + "\n"


def train_config_payload(config: TrainConfig, methods: Sequence[str],
                         seeds: Sequence[int], shot_counts: Sequence[int]) -> dict[str, Any]:
    """Canonical config dict used for traceability hashes."""
    payload = asdict(config)
    payload["methods"] = list(methods)
    payload["seeds"] = list(seeds)
    payload["shot_counts"] = list(shot_counts)
    return payload
