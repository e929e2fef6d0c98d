import json

import pytest

from calprompt.core import LabelProbRecord, PriorProfile, TaskManifest
from calprompt import io


@pytest.fixture
def binary_manifest():
    return TaskManifest(
        task="amazon_polarity",
        labels=("neg", "pos"),
        label_words=("bad", "good"),
        template_id="amazon-p",
        metric="accuracy",
        balanced=True,
    )


@pytest.fixture
def binary_priors():
    # mask-only probe puts most mass on "good": P(good)=0.92, P(bad)=0.08
    return PriorProfile(mask_only=(0.08, 0.92), empty_template=(0.12, 0.88))


def make_record(i, gold, probs, split="test"):
    return LabelProbRecord(example_id=f"ex{i:04d}", gold=gold,
                           probs=tuple(probs), split=split)


@pytest.fixture
def small_records():
    """Four test records whose raw argmax is always "good" (index 1)."""
    return (
        make_record(0, 1, (0.03, 0.96)),
        make_record(1, 1, (0.05, 0.94)),
        make_record(2, 0, (0.08, 0.90)),
        make_record(3, 0, (0.10, 0.88)),
    )


@pytest.fixture
def bundle_files(tmp_path, binary_manifest, binary_priors, small_records):
    """Write a well-formed (records, manifest, priors) trio; returns paths."""
    records_path = tmp_path / "records.jsonl"
    manifest_path = tmp_path / "manifest.json"
    priors_path = tmp_path / "priors.json"
    train = tuple(
        make_record(100 + i, i % 2, (0.04 + 0.002 * i, 0.90 - 0.003 * i), split="train")
        for i in range(8)
    )
    io.write_records(records_path, train + small_records,
                     meta={"engine": io.ENGINE})
    io.write_manifest(manifest_path, binary_manifest)
    io.write_priors(priors_path, binary_priors)
    return records_path, manifest_path, priors_path


@pytest.fixture
def write_bundle(tmp_path):
    """Factory: write an arbitrary bundle into tmp_path/<name>/."""

    def _write(name, manifest, priors, records):
        out = tmp_path / name
        out.mkdir(parents=True, exist_ok=True)
        io.write_records(out / "records.jsonl", records)
        io.write_manifest(out / "manifest.json", manifest)
        io.write_priors(out / "priors.json", priors)
        return out / "records.jsonl", out / "manifest.json", out / "priors.json"

    return _write


def write_json(path, obj):
    path.write_text(json.dumps(obj) + "\n", encoding="utf-8")
