"""Command line: probe a masked LM and emit engine-format files.

Exit codes follow the engine's convention: 0 success, 1 bad inputs or
startup validation (including label words that are not single tokens),
2 internal errors.
"""

import argparse
import sys
from typing import Sequence

from . import extract
from .templates import TemplateError, get_template, templates_for_task


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="calprompt-extract",
        description="Run masked-LM inference over cloze prompts and write "
                    "label-word probability records plus content-free priors.")
    ap.add_argument("--model", required=True,
                    help="checkpoint name or local directory "
                         "(e.g. bert-base-cased)")
    ap.add_argument("--task", help="task name; picks its first template")
    ap.add_argument("--template-id", help="explicit template (overrides --task)")
    ap.add_argument("--input", required=True,
                    help="CSV/TSV of (x, gold) or (x, y, gold) rows")
    ap.add_argument("--out-records", required=True)
    ap.add_argument("--out-priors", required=True)
    ap.add_argument("--out-manifest",
                    help="also write a task manifest next to the records")
    ap.add_argument("--batch-size", type=int, default=extract.DEFAULT_BATCH_SIZE)
    ap.add_argument("--max-len", type=int, default=extract.DEFAULT_MAX_LEN)
    ap.add_argument("--split", choices=("train", "test"), default="test")
    ap.add_argument("--language", help="optional language code for the records")
    ap.add_argument("--metric", choices=("accuracy", "macro_f1"),
                    default="accuracy", help="metric recorded in the manifest")
    ap.add_argument("--unbalanced", action="store_true",
                    help="mark the split unbalanced in the manifest")
    return ap


def run(args: argparse.Namespace) -> int:
    if not args.template_id and not args.task:
        raise TemplateError("give --task or --template-id")
    if args.template_id:
        template = get_template(args.template_id)
    else:
        template = templates_for_task(args.task)[0]
    template.validate()
    if args.unbalanced and args.metric == "accuracy":
        raise TemplateError(
            "accuracy is reserved for balanced splits; pick --metric macro_f1 "
            "or drop --unbalanced")
    if args.batch_size < 1 or args.max_len < 4:
        raise TemplateError("batch size must be >= 1 and max len >= 4")

    rows = extract.read_rows(args.input)
    model, tokenizer = extract.load_model(args.model)
    # fails fast, before any inference, if a label word is not a single token
    extract.resolve_label_ids(tokenizer, template.label_words)

    records = extract.extract_records(
        model, tokenizer, template, rows, dataset=template.task,
        batch_size=args.batch_size, max_len=args.max_len,
        split=args.split, language=args.language)
    priors = extract.extract_priors(model, tokenizer, template,
                                    max_len=args.max_len)

    meta = {"extractor": "calprompt-extract/0.1.0", "model": args.model,
            "template_id": template.template_id,
            "batch_size": args.batch_size, "max_len": args.max_len}
    extract.write_records_jsonl(args.out_records, records, meta=meta)
    extract.write_priors_json(args.out_priors, priors)
    if args.out_manifest:
        extract.write_manifest_json(args.out_manifest, template,
                                    metric=args.metric,
                                    balanced=not args.unbalanced,
                                    language=args.language)
    print(f"OK: {len(records)} records, template={template.template_id}, "
          f"model={args.model}")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (TemplateError, extract.ExtractionError, FileNotFoundError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
