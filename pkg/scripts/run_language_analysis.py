#!/usr/bin/env python3
"""Per-language calibration deltas on the bundled multilingual benchmark.

Prints quartile summaries of the accuracy improvement (calibrated minus
uncalibrated) grouped by language family and by accessibility, and writes
the delta and group CSVs when --out-dir is given.
"""

import argparse
from pathlib import Path

from calprompt import io
from calprompt.multilingual import (
    builtin_scores_path,
    builtin_table_path,
    compute_deltas,
    group_by_accessibility,
    group_by_family,
    load_language_table,
    load_score_table,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--methods", nargs="+", default=["penalty", "cbm"])
    ap.add_argument("--baseline-method", default="no_calib")
    ap.add_argument("--corrected-table", action="store_true",
                    help="use the corrected family assignments instead of the "
                         "benchmark's table as published")
    ap.add_argument("--min-family-size", type=int, default=3)
    ap.add_argument("--out-dir", type=Path)
    args = ap.parse_args()

    rows = load_language_table(builtin_table_path(corrected=args.corrected_table))
    scores = load_score_table(builtin_scores_path())
    baseline = scores[args.baseline_method]

    reports = {}
    for method in args.methods:
        report = compute_deltas(baseline, scores[method])
        reports[method] = report
        by_family = group_by_family(report, rows, min_size=args.min_family_size)
        by_access = group_by_accessibility(report, rows)
        print(io.render_group_text(by_family, f"{method}: delta by family"))
        print(io.render_group_text(by_access, f"{method}: delta by accessibility"))

        if args.out_dir:
            args.out_dir.mkdir(parents=True, exist_ok=True)
            cfg = {"method": method, "baseline": args.baseline_method,
                   "min_family_size": args.min_family_size}
            io.write_group_csv(args.out_dir / f"groups_family_{method}.csv",
                               by_family, method, cfg)
            io.write_group_csv(args.out_dir / f"groups_accessibility_{method}.csv",
                               by_access, method, cfg)

    if args.out_dir:
        cfg = {"methods": args.methods, "baseline": args.baseline_method}
        io.write_delta_csv(args.out_dir / "deltas.csv", reports, cfg)
        print(f"CSVs written to {args.out_dir}")


if __name__ == "__main__":
    main()
