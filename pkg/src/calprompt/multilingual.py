"""Per-language calibration deltas, grouped by accessibility and family.

The shipped language table for multilingual AG News is transcribed verbatim
from the benchmark's documentation, idiosyncrasies included (the "Dravadian"
spelling, Khmer filed under Austronesian, the ta/tl glosses).  A corrected
variant sits next to it for anyone who wants conventional classifications;
it is not the reproduction table.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import ValidationError

log = logging.getLogger("calprompt")

ACCESSIBILITY_VALUES = ("low-resource", "unseen-language", "unseen-script")

# Raw table spellings -> canonical accessibility keys.
_ACCESSIBILITY_ALIASES = {
    "low-resource": "low-resource",
    "low resource": "low-resource",
    "unseen-language": "unseen-language",
    "unseen language": "unseen-language",
    "unseen-languages": "unseen-language",
    "unseen languages": "unseen-language",
    "unseen-script": "unseen-script",
    "unseen script": "unseen-script",
    "unseen-scripts": "unseen-script",
    "unseen scripts": "unseen-script",
}


def canonical_accessibility(raw: str) -> str:
    key = raw.strip().lower()
    try:
        return _ACCESSIBILITY_ALIASES[key]
    except KeyError:
        raise ValidationError(
            f"unknown accessibility value {raw!r}; expected one of {ACCESSIBILITY_VALUES}"
        ) from None


@dataclass(frozen=True)
class LanguageInfo:
    """One language table row."""

    code: str
    name: str
    accessibility: str
    family: str

    def validate(self) -> None:
        if not self.code:
            raise ValidationError("language code must be non-empty")
        if self.accessibility not in ACCESSIBILITY_VALUES:
            raise ValidationError(
                f"{self.code}: accessibility {self.accessibility!r} not in "
                f"{ACCESSIBILITY_VALUES}"
            )
        if not self.family:
            raise ValidationError(f"{self.code}: family must be non-empty")
        if not self.name:
            raise ValidationError(f"{self.code}: name must be non-empty")


@dataclass(frozen=True)
class LanguageDelta:
    baseline: float
    calibrated: float
    delta: float


@dataclass(frozen=True)
class GroupStats:
    """Box-plot summary: linear-interpolation quartiles."""

    n: int
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    mean: float

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "GroupStats":
        if len(values) == 0:
            raise ValidationError("cannot summarize an empty group")
        arr = np.asarray(values, dtype=float)
        q1, med, q3 = np.percentile(arr, [25.0, 50.0, 75.0])
        return cls(n=int(arr.size), minimum=float(arr.min()), q1=float(q1),
                   median=float(med), q3=float(q3), maximum=float(arr.max()),
                   mean=float(arr.mean()))


@dataclass(frozen=True)
class LanguageGroup:
    codes: tuple[str, ...]
    deltas: tuple[float, ...]
    stats: GroupStats


@dataclass(frozen=True)
class DeltaReport:
    """Per-language (baseline, calibrated, delta) plus optional groupings."""

    per_language: dict[str, LanguageDelta]
    groups: dict[str, LanguageGroup] = field(default_factory=dict)
    grouping: str | None = None
    skipped: tuple[str, ...] = ()

    def summary_rows(self) -> list[tuple]:
        """(group, n, min, q1, median, q3, max, mean) per group, sorted."""
        rows = []
        for key in sorted(self.groups):
            s = self.groups[key].stats
            rows.append((key, s.n, s.minimum, s.q1, s.median, s.q3, s.maximum, s.mean))
        return rows


# ---------------------------------------------------------------------------
# Table loading
# ---------------------------------------------------------------------------


def builtin_table_path(corrected: bool = False) -> Path:
    name = "agnews_languages_corrected.tsv" if corrected else "agnews_languages.tsv"
    return Path(str(resources.files("calprompt").joinpath("data", name)))


def builtin_scores_path() -> Path:
    return Path(str(resources.files("calprompt").joinpath("data", "agnews_mbert_scores.csv")))


def load_language_table(path: str | Path) -> list[LanguageInfo]:
    """Read a tab-separated (code, name, accessibility, family) table.

    Blank lines and '#' comments are skipped; accessibility is canonicalized
    to the lowercase hyphenated keys.  Duplicate codes are an error.
    """
    path = Path(path)
    rows: list[LanguageInfo] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = [p.strip() for p in stripped.split("\t")]
            if len(parts) != 4:
                raise ValidationError(
                    f"{path.name}:{lineno}: expected 4 tab-separated columns, got {len(parts)}"
                )
            code, name, accessibility, family = parts
            if code == "code":  # optional header row
                continue
            if code in seen:
                raise ValidationError(f"{path.name}:{lineno}: duplicate language code {code!r}")
            seen.add(code)
            info = LanguageInfo(code=code, name=name,
                                accessibility=canonical_accessibility(accessibility),
                                family=family)
            info.validate()
            rows.append(info)
    if not rows:
        raise ValidationError(f"{path.name}: no language rows found")
    return rows


def load_score_table(path: str | Path) -> dict[str, dict[str, float]]:
    """Read a (language, method, value) CSV into method -> code -> value."""
    path = Path(path)
    out: dict[str, dict[str, float]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["language", "method", "value"]:
            raise ValidationError(f"{path.name}: expected header language,method,value")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValidationError(f"{path.name}:{lineno}: expected 3 columns")
            code, method, raw = (c.strip() for c in row)
            try:
                value = float(raw)
            except ValueError:
                raise ValidationError(
                    f"{path.name}:{lineno}: value {raw!r} is not a number"
                ) from None
            bucket = out.setdefault(method, {})
            if code in bucket:
                raise ValidationError(
                    f"{path.name}:{lineno}: duplicate entry for ({code}, {method})"
                )
            bucket[code] = value
    return out


# ---------------------------------------------------------------------------
# Deltas and grouping
# ---------------------------------------------------------------------------


def compute_deltas(
    baseline: Mapping[str, float],
    calibrated: Mapping[str, float],
) -> DeltaReport:
    """delta = calibrated - baseline, per language; no grouping yet."""
    base_keys, cal_keys = set(baseline), set(calibrated)
    if base_keys != cal_keys:
        missing = sorted(base_keys - cal_keys)
        extra = sorted(cal_keys - base_keys)
        raise ValidationError(
            "language key sets differ: "
            f"only in baseline {missing}, only in calibrated {extra}"
        )
    per_language = {
        code: LanguageDelta(baseline=float(baseline[code]),
                            calibrated=float(calibrated[code]),
                            delta=float(calibrated[code]) - float(baseline[code]))
        for code in sorted(base_keys)
    }
    return DeltaReport(per_language=per_language)


def _partition(
    report: DeltaReport,
    table: Sequence[LanguageInfo],
    key_of: str,
    on_unknown: str,
) -> tuple[dict[str, list[str]], tuple[str, ...]]:
    by_code = {info.code: info for info in table}
    buckets: dict[str, list[str]] = {}
    skipped: list[str] = []
    for code in report.per_language:
        info = by_code.get(code)
        if info is None:
            if on_unknown == "error":
                raise ValidationError(f"language {code!r} not present in the language table")
            log.warning("language %r not in table, skipped from grouping", code)
            skipped.append(code)
            continue
        buckets.setdefault(getattr(info, key_of), []).append(code)
    return buckets, tuple(skipped)


def _grouped(report: DeltaReport, buckets: dict[str, list[str]],
             grouping: str, skipped: tuple[str, ...]) -> DeltaReport:
    groups = {}
    for key, codes in buckets.items():
        deltas = tuple(report.per_language[c].delta for c in codes)
        groups[key] = LanguageGroup(codes=tuple(codes), deltas=deltas,
                                    stats=GroupStats.from_values(deltas))
    return replace(report, groups=groups, grouping=grouping, skipped=skipped)


def group_by_accessibility(
    report: DeltaReport,
    table: Sequence[LanguageInfo],
    *,
    on_unknown: str = "skip",
) -> DeltaReport:
    """Bucket deltas into the three accessibility classes."""
    if on_unknown not in ("skip", "error"):
        raise ValidationError(f"on_unknown must be 'skip' or 'error', got {on_unknown!r}")
    buckets, skipped = _partition(report, table, "accessibility", on_unknown)
    return _grouped(report, buckets, "accessibility", skipped)


def group_by_family(
    report: DeltaReport,
    table: Sequence[LanguageInfo],
    min_size: int = 3,
    *,
    on_unknown: str = "skip",
) -> DeltaReport:
    """Bucket deltas by family, keeping families with >= min_size members."""
    if on_unknown not in ("skip", "error"):
        raise ValidationError(f"on_unknown must be 'skip' or 'error', got {on_unknown!r}")
    if min_size < 1:
        raise ValidationError(f"min_size must be >= 1, got {min_size}")
    buckets, skipped = _partition(report, table, "family", on_unknown)
    buckets = {fam: codes for fam, codes in buckets.items() if len(codes) >= min_size}
    return _grouped(report, buckets, "family", skipped)
