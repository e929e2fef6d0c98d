#!/usr/bin/env python3
"""Generate a synthetic biased binary task bundle for engine demos.

The generator mimics the situation the engine exists for: a model whose
content-free prior heavily favors one label word, so raw argmax collapses
onto that word while the underlying signal is separable.  Positive examples
place the favored word's probability near the top of the range, negatives a
bit lower, and both stay above 0.5 so the uncalibrated accuracy sits at
chance on a balanced split.
"""

import argparse
from pathlib import Path

import numpy as np

from calprompt.core import LabelProbRecord, PriorProfile, TaskManifest
from calprompt import io

MASK_ONLY = (0.08, 0.92)
EMPTY_TEMPLATE = (0.12, 0.88)


def make_records(n_train: int, n_test: int, rng: np.random.Generator):
    records = []
    for i in range(n_train + n_test):
        gold = i % 2
        split = "train" if i < n_train else "test"
        if gold == 1:
            p_good = rng.uniform(0.93, 0.99)
        else:
            p_good = rng.uniform(0.86, 0.952)
        # leave some mass unassigned: raw word probabilities never sum to 1
        p_bad = (1.0 - p_good) * rng.uniform(0.3, 0.9)
        records.append(LabelProbRecord(
            example_id=f"syn{i:05d}", gold=gold,
            probs=(float(p_bad), float(p_good)), split=split,
        ))
    return records


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", type=Path, required=True)
    ap.add_argument("--n-train", type=int, default=200)
    ap.add_argument("--n-test", type=int, default=400)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    manifest = TaskManifest(
        task="synthetic_polarity", labels=("neg", "pos"),
        label_words=("bad", "good"), template_id="synthetic-v1",
        metric="accuracy", balanced=True,
    )
    priors = PriorProfile(mask_only=MASK_ONLY, empty_template=EMPTY_TEMPLATE)
    records = make_records(args.n_train, args.n_test, rng)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    io.write_records(args.out_dir / "records.jsonl", records,
                     meta={"generator": "make_synthetic_task", "seed": args.seed})
    io.write_manifest(args.out_dir / "manifest.json", manifest)
    io.write_priors(args.out_dir / "priors.json", priors)
    print(f"wrote {len(records)} records to {args.out_dir}")


if __name__ == "__main__":
    main()
