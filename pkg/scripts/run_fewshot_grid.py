#!/usr/bin/env python3
"""Run the few-shot calibration grid on a bundle and print the text report.

Give it a directory produced by make_synthetic_task.py (or any directory
holding records.jsonl, manifest.json, priors.json).  Also runs a threshold
sweep on the positive label word to show the decision-boundary view of the
same prior bias.
"""

import argparse
from pathlib import Path

from calprompt import io
from calprompt.fewshot import (
    DEFAULT_SEEDS,
    DEFAULT_SHOT_COUNTS,
    run_grid,
)
from calprompt.metrics import positive_probabilities, threshold_sweep


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("bundle_dir", type=Path)
    ap.add_argument("--methods", nargs="+", default=["penalty", "cc"])
    ap.add_argument("--shots", nargs="+", type=int, default=list(DEFAULT_SHOT_COUNTS))
    ap.add_argument("--seeds", nargs="+", type=int, default=list(DEFAULT_SEEDS))
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--out-report", type=Path, help="optional grid CSV destination")
    args = ap.parse_args()

    bundle = io.ingest(args.bundle_dir / "records.jsonl",
                       args.bundle_dir / "manifest.json",
                       args.bundle_dir / "priors.json")
    report = run_grid(bundle.manifest, bundle.train_records, bundle.test_records,
                      bundle.priors, methods=tuple(args.methods),
                      shot_counts=tuple(args.shots), seeds=tuple(args.seeds),
                      epochs=args.epochs)
    print(io.render_grid_text(report))

    if len(bundle.manifest.labels) == 2:
        probs = positive_probabilities(bundle.test_records)
        golds = [1 if r.gold == 1 else 0 for r in bundle.test_records]
        curve = threshold_sweep(probs, golds)
        at_half = dict(curve.grid).get(0.5)
        print(f"\nthreshold sweep: best tau={curve.best_tau} "
              f"accuracy={curve.best_accuracy:.4f} (tau=0.5: {at_half:.4f})")

    if args.out_report:
        cfg = {"methods": args.methods, "shots": args.shots,
               "seeds": args.seeds, "epochs": args.epochs}
        io.write_grid_csv(args.out_report, report, cfg)
        print(f"grid CSV written to {args.out_report}")


if __name__ == "__main__":
    main()
