"""Command-line pipeline: validate, calibrate, train, evaluate, sweep, analyze.

Exit codes: 0 success, 1 validation failure (bad inputs), 2 internal error.
Verbosity via the CALPROMPT_LOG environment variable (DEBUG, INFO, ...).
Every command is a deterministic function of its files and flags; no
timestamps or machine state leak into outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import fewshot, io, metrics, multilingual
from ._version import __version__
from .core import (
    CalibrationError,
    CalibratorSpec,
    TRAINABLE_METHODS,
    METHODS,
    ValidationError,
    renormalized_record,
)
from .fewshot import TrainConfig

log = logging.getLogger("calprompt")

F1_CHOICES = metrics.F1_VARIANTS


def _setup_logging() -> None:
    level_name = os.environ.get("CALPROMPT_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------------------
# Shared argument plumbing
# ---------------------------------------------------------------------------


def _add_bundle_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("records", help="label-probability records (JSONL)")
    p.add_argument("manifest", help="task manifest (JSON or TOML)")
    p.add_argument("priors", help="prior profile (JSON)")
    p.add_argument("--strict", action="store_true",
                   help="fail on exact-zero divisors/logs instead of clamping")
    p.add_argument("--renormalize", action="store_true",
                   help="rescale each record's probs to sum to 1 before use")
    p.add_argument("--allow-metric-mismatch", action="store_true",
                   help="permit metric/balanced combinations outside the convention")


def _add_split_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--split", choices=("test", "train", "all"), default="test",
                   help="record subset to evaluate (default: test)")


def _load_bundle(args: argparse.Namespace, config: TrainConfig | None = None,
                 methods: Sequence[str] = ("penalty", "cc")) -> io.RunBundle:
    bundle = io.ingest(
        args.records, args.manifest, args.priors,
        config=config, methods=tuple(methods),
        enforce_metric_convention=not args.allow_metric_mismatch,
    )
    if args.renormalize:
        bundle = io.RunBundle(
            manifest=bundle.manifest,
            priors=bundle.priors,
            train_records=tuple(renormalized_record(r, strict=args.strict)
                                for r in bundle.train_records),
            test_records=tuple(renormalized_record(r, strict=args.strict)
                               for r in bundle.test_records),
            config=bundle.config,
            methods=bundle.methods,
        )
    return bundle


def _pick_split(bundle: io.RunBundle, split: str):
    if split == "train":
        return bundle.train_records
    if split == "all":
        return bundle.records
    return bundle.test_records


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> int:
    bundle = _load_bundle(args)
    print(f"OK: task={bundle.manifest.task} labels={bundle.manifest.num_labels} "
          f"train={len(bundle.train_records)} test={len(bundle.test_records)}")
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    bundle = _load_bundle(args)
    if args.calibrator:
        spec = io.load_calibrator(args.calibrator)
        method = spec.method
    else:
        method = args.method
        spec = CalibratorSpec(method=method)
    records = _pick_split(bundle, args.split)
    scores, preds = metrics.score_records(
        records, spec, bundle.manifest, bundle.priors,
        strict=args.strict,
    )
    cfg = {"method": method, "split": args.split, "strict": args.strict,
           "renormalize": args.renormalize,
           "calibrator": str(args.calibrator) if args.calibrator else None}
    io.write_scores_csv(args.out, bundle.manifest, records, scores, preds,
                        method, cfg)
    hits = sum(1 for rec, p in zip(records, preds) if rec.gold == int(p))
    print(f"calibrated {len(records)} records with {method}; "
          f"argmax matches gold on {hits}/{len(records)}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    methods = tuple(args.methods)
    for m in methods:
        if m not in TRAINABLE_METHODS:
            raise ValidationError(
                f"--methods accepts trainable methods {TRAINABLE_METHODS}, got {m!r}")
    shot_counts = tuple(args.shots)
    config = TrainConfig(epochs=args.epochs, learning_rate=args.lr,
                         seed=args.seeds[0], shots_per_class=1)
    config.validate()
    bundle = _load_bundle(args, config=config, methods=methods)
    if args.shots_total:
        L = bundle.manifest.num_labels
        bad = [t for t in shot_counts if t % L]
        if bad:
            raise ValidationError(
                f"--shots-total values must be divisible by the {L} labels, got {bad}")
        shot_counts = tuple(t // L for t in shot_counts)
    report = fewshot.run_grid(
        bundle.manifest, bundle.train_records, bundle.test_records,
        bundle.priors, methods=methods, shot_counts=shot_counts,
        seeds=tuple(args.seeds), epochs=args.epochs, learning_rate=args.lr,
        strict=args.strict, f1_variant=args.f1,
        positive_label=args.positive_label,
    )
    cfg = io.train_config_payload(config, methods, args.seeds, shot_counts)
    cfg["strict"] = args.strict
    cfg["renormalize"] = args.renormalize
    io.write_grid_csv(args.out_report, report, cfg)
    text = io.render_grid_text(report)
    if args.out_text:
        io.atomic_write_text(args.out_text, text)
    print(text, end="")
    if args.save_calibrators:
        out_dir = Path(args.save_calibrators)
        out_dir.mkdir(parents=True, exist_ok=True)
        k = max(shot_counts)
        seed = args.seeds[0]
        save_cfg = TrainConfig(epochs=args.epochs, learning_rate=args.lr,
                               seed=seed, shots_per_class=k)
        for method in methods:
            shots = fewshot.sample_shots(bundle.train_records, k, seed,
                                         num_labels=bundle.manifest.num_labels)
            spec = fewshot.train_calibrator(method, shots, bundle.priors,
                                            save_cfg, strict=args.strict)
            path = out_dir / f"{method}.calibrator.json"
            io.write_calibrator(path, spec, meta={
                "engine": io.ENGINE, "method": method,
                "config": io.config_hash({**cfg, "seed": seed, "shots": k}),
            })
            print(f"saved {method} calibrator (k={k}, seed={seed}) to {path}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    bundle = _load_bundle(args)
    spec = io.load_calibrator(args.calibrator) if args.calibrator \
        else CalibratorSpec(method=args.method)
    records = _pick_split(bundle, args.split)
    value, cm = metrics.evaluate(
        records, spec, bundle.manifest, bundle.priors,
        strict=args.strict, f1_variant=args.f1,
        positive_label=args.positive_label,
    )
    cfg = {"method": spec.method, "split": args.split, "f1": args.f1,
           "strict": args.strict, "renormalize": args.renormalize}
    payload = {
        "task": bundle.manifest.task,
        "metric": bundle.manifest.metric,
        "method": spec.method,
        "value": value,
        "n": cm.total,
        "confusion": [list(row) for row in cm.counts],
        "_meta": {"engine": io.ENGINE, "config": io.config_hash(cfg)},
    }
    io.atomic_write_text(args.out, json.dumps(payload, indent=2) + "\n")
    print(f"{bundle.manifest.metric}={value!r} on {cm.total} records ({spec.method})")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    bundle = _load_bundle(args)
    if bundle.manifest.num_labels != 2:
        raise ValidationError("threshold sweep needs a binary task")
    records = _pick_split(bundle, args.split)
    if not records:
        raise ValidationError(f"no records in split {args.split!r}")
    pos = metrics.positive_probabilities(records, args.positive_label,
                                         normalized=args.normalized)
    golds = [1 if rec.gold == args.positive_label else 0 for rec in records]
    curve = metrics.threshold_sweep(pos, golds, grid_step=args.grid_step)
    cfg = {"split": args.split, "grid_step": args.grid_step,
           "positive_label": args.positive_label, "normalized": args.normalized,
           "renormalize": args.renormalize}
    io.write_sweep_csv(args.out, curve.grid, curve.best_tau,
                       curve.best_accuracy, "none", cfg)
    print(f"best_tau={curve.best_tau!r} best_accuracy={curve.best_accuracy!r} "
          f"(accuracy at 0.5: {dict(curve.grid).get(0.5)!r})")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    if args.table:
        table_path = Path(args.table)
    else:
        table_path = multilingual.builtin_table_path(corrected=args.corrected_table)
    table = multilingual.load_language_table(table_path)

    score_paths = args.scores or [str(multilingual.builtin_scores_path())]
    scores: dict[str, dict[str, float]] = {}
    for path in score_paths:
        for method, values in multilingual.load_score_table(path).items():
            bucket = scores.setdefault(method, {})
            clash = set(bucket) & set(values)
            if clash:
                raise ValidationError(
                    f"{Path(path).name}: duplicate scores for method {method!r}, "
                    f"languages {sorted(clash)}")
            bucket.update(values)

    if args.baseline_method not in scores:
        raise ValidationError(
            f"baseline method {args.baseline_method!r} not in score files "
            f"(have {sorted(scores)})")
    on_unknown = "error" if args.strict_languages else "skip"

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports: dict[str, multilingual.DeltaReport] = {}
    for method in args.methods:
        if method not in scores:
            raise ValidationError(f"method {method!r} not in score files "
                                  f"(have {sorted(scores)})")
        reports[method] = multilingual.compute_deltas(
            scores[args.baseline_method], scores[method])

    cfg = {"methods": list(args.methods), "baseline": args.baseline_method,
           "table": table_path.name, "min_family_size": args.min_family_size,
           "strict_languages": args.strict_languages, "pool": args.pool}
    io.write_delta_csv(out_dir / "deltas.csv", reports, cfg)

    groupers = {
        "accessibility": lambda rep: multilingual.group_by_accessibility(
            rep, table, on_unknown=on_unknown),
        "family": lambda rep: multilingual.group_by_family(
            rep, table, args.min_family_size, on_unknown=on_unknown),
    }
    for grouping, group_fn in groupers.items():
        if args.pool:
            pooled_per_language = {}
            for method, rep in reports.items():
                for code, entry in rep.per_language.items():
                    pooled_per_language[f"{code}:{method}"] = entry
            # pooled grouping needs table lookups by bare code
            pooled_groups: dict[str, list[float]] = {}
            skipped: list[str] = []
            by_code = {info.code: info for info in table}
            for key, entry in pooled_per_language.items():
                code = key.split(":", 1)[0]
                info = by_code.get(code)
                if info is None:
                    if args.strict_languages:
                        raise ValidationError(f"language {code!r} not in the language table")
                    skipped.append(key)
                    continue
                group_key = getattr(info, "accessibility" if grouping == "accessibility"
                                    else "family")
                pooled_groups.setdefault(group_key, []).append(entry.delta)
            if grouping == "family":
                min_langs = args.min_family_size * max(len(reports), 1)
                pooled_groups = {g: v for g, v in pooled_groups.items()
                                 if len(v) >= min_langs}
            groups = {
                g: multilingual.LanguageGroup(
                    codes=(), deltas=tuple(v),
                    stats=multilingual.GroupStats.from_values(v))
                for g, v in pooled_groups.items()
            }
            report = multilingual.DeltaReport(
                per_language={}, groups=groups, grouping=grouping,
                skipped=tuple(dict.fromkeys(k.split(":", 1)[0] for k in skipped)))
            io.write_group_csv(out_dir / f"groups_{grouping}_pooled.csv",
                               report, ",".join(sorted(reports)), cfg)
            print(io.render_group_text(report, f"{grouping} (pooled: "
                                       f"{', '.join(sorted(reports))})"), end="")
        else:
            for method, rep in reports.items():
                grouped = group_fn(rep)
                io.write_group_csv(out_dir / f"groups_{grouping}_{method}.csv",
                                   grouped, method, cfg)
                print(io.render_group_text(grouped, f"{grouping} ({method})"), end="")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="calprompt",
        description="Offline calibration engine for cloze-prompt classifiers.",
    )
    parser.add_argument("--version", action="version",
                        version=f"calprompt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a records/manifest/priors bundle")
    _add_bundle_args(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("calibrate", help="apply a calibration method, write scores")
    _add_bundle_args(p)
    _add_split_arg(p)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--method", choices=METHODS, default="none")
    group.add_argument("--calibrator", help="trained calibrator JSON to apply")
    p.add_argument("--out", required=True, help="output scores CSV")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("train", help="few-shot training grid over seeds and shots")
    _add_bundle_args(p)
    p.add_argument("--methods", nargs="+", default=list(TRAINABLE_METHODS),
                   metavar="METHOD", help="trainable methods (penalty, cc)")
    p.add_argument("--seeds", nargs="+", type=int,
                   default=list(fewshot.DEFAULT_SEEDS))
    p.add_argument("--shots", nargs="+", type=int,
                   default=list(fewshot.DEFAULT_SHOT_COUNTS),
                   help="shots per class (or totals with --shots-total)")
    p.add_argument("--shots-total", action="store_true",
                   help="read --shots as total budgets, split evenly across classes")
    p.add_argument("--epochs", type=int, default=fewshot.DEFAULT_EPOCHS)
    p.add_argument("--lr", type=float, default=fewshot.DEFAULT_LEARNING_RATE)
    p.add_argument("--f1", choices=F1_CHOICES, default="macro")
    p.add_argument("--positive-label", type=int, default=1)
    p.add_argument("--out-report", required=True, help="grid report CSV")
    p.add_argument("--out-text", help="also write the aligned text report here")
    p.add_argument("--save-calibrators",
                   help="directory for per-method trained calibrator files "
                        "(largest shot count, first seed)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a record set with one calibrator")
    _add_bundle_args(p)
    _add_split_arg(p)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--method", choices=METHODS, default="none")
    group.add_argument("--calibrator", help="trained calibrator JSON to apply")
    p.add_argument("--f1", choices=F1_CHOICES, default="macro")
    p.add_argument("--positive-label", type=int, default=1)
    p.add_argument("--out", required=True, help="output report JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="threshold sweep on the positive label word")
    _add_bundle_args(p)
    _add_split_arg(p)
    p.add_argument("--grid-step", type=float, default=0.01)
    p.add_argument("--positive-label", type=int, default=1)
    p.add_argument("--normalized", action="store_true",
                   help="use p_pos/(p_pos+p_neg) instead of the raw probability")
    p.add_argument("--out", required=True, help="output curve CSV")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="per-language deltas grouped by "
                                       "accessibility and family")
    p.add_argument("--scores", nargs="+",
                   help="(language, method, value) CSV files "
                        "(default: bundled multilingual AG News scores)")
    p.add_argument("--table", help="language table TSV (default: bundled)")
    p.add_argument("--corrected-table", action="store_true",
                   help="use the bundled corrected-classification table variant")
    p.add_argument("--methods", nargs="+", default=["penalty", "cbm"],
                   metavar="METHOD")
    p.add_argument("--baseline-method", default="no_calib")
    p.add_argument("--min-family-size", type=int, default=3)
    p.add_argument("--strict-languages", action="store_true",
                   help="error on languages missing from the table instead of skipping")
    p.add_argument("--pool", action="store_true",
                   help="pool all selected methods' deltas into one set of group stats")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, CalibrationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
