"""Masked-LM inference: turn prompts into label-word probability files.

This package writes the calibration engine's file formats (records JSONL,
priors JSON, manifest JSON) but deliberately does not import the engine;
the two packages talk only through files and the engine's CLI.
"""

import csv
import json
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch

from .templates import PromptTemplate, instantiate

log = logging.getLogger("calprompt_extractor")

DEFAULT_BATCH_SIZE = 8
DEFAULT_MAX_LEN = 128


class ExtractionError(ValueError):
    """Startup or per-example extraction failure."""


@dataclass(frozen=True)
class InputRow:
    x: str
    y: str | None
    gold: int


def load_model(name_or_dir: str):
    """Load tokenizer and masked-LM head; inference mode, CPU."""
    from transformers import AutoModelForMaskedLM, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(name_or_dir)
    model = AutoModelForMaskedLM.from_pretrained(name_or_dir)
    model.eval()
    if tokenizer.mask_token is None:
        raise ExtractionError(f"{name_or_dir}: tokenizer has no mask token")
    return model, tokenizer


def resolve_label_ids(tokenizer, label_words: Sequence[str]) -> list[int]:
    """One vocabulary id per label word, or a startup error naming the word.

    The bare word must be a single non-unknown token. For vocabularies that
    mark word starts with a space prefix (byte-BPE style), the space-prefixed
    form is tried when the bare form fails, since the mask sits mid-sentence.
    Word pieces are never accepted: a word that splits is a hard error.
    """
    ids = []
    unk = tokenizer.unk_token_id
    for word in label_words:
        chosen = None
        for form in (word, " " + word):
            toks = tokenizer.tokenize(form)
            if len(toks) == 1:
                tok_id = tokenizer.convert_tokens_to_ids(toks[0])
                if tok_id != unk:
                    chosen = tok_id
                    break
        if chosen is None:
            raise ExtractionError(
                f"label word {word!r} is not a single vocabulary token for "
                f"this model (pieces: {tokenizer.tokenize(word)!r})"
            )
        ids.append(chosen)
    if len(set(ids)) != len(ids):
        raise ExtractionError("label words collide on the same vocabulary id")
    return ids


def _encode(tokenizer, text: str) -> list[int]:
    return tokenizer.encode(text, add_special_tokens=False)


def build_prompt(tokenizer, template: PromptTemplate, x: str, y: str | None,
                 max_len: int) -> str:
    """Instantiate, truncating only the slot contents to fit ``max_len``.

    [X] is cut first, then [Y]; template tokens and the mask are never
    dropped. Cutting happens on token boundaries and the shortened text is
    re-checked after reassembly, since joining shortened text back into the
    pattern can re-tokenize differently around the seams.
    """
    mask = tokenizer.mask_token

    def assemble(x_text: str, y_text: str | None) -> str:
        return instantiate(template, x_text, y_text, mask_token=mask)

    def total_len(prompt: str) -> int:
        return len(tokenizer.encode(prompt))

    y_val = y if template.needs_y else None
    prompt = assemble(x, y_val)
    if total_len(prompt) <= max_len:
        return prompt

    overhead = total_len(assemble("", "" if template.needs_y else None))
    x_ids = _encode(tokenizer, x)
    y_ids = _encode(tokenizer, y_val) if y_val else []
    budget = max_len - overhead
    if budget < 0:
        raise ExtractionError(
            f"max_len={max_len} cannot even hold the bare template "
            f"({overhead} tokens)"
        )
    keep_x = min(len(x_ids), max(0, budget - len(y_ids)))
    keep_y = min(len(y_ids), budget - keep_x)
    while True:
        x_text = tokenizer.decode(x_ids[:keep_x]).strip() if keep_x else ""
        y_text = None
        if template.needs_y:
            y_text = tokenizer.decode(y_ids[:keep_y]).strip() if keep_y else ""
        prompt = assemble(x_text, y_text)
        if total_len(prompt) <= max_len:
            return prompt
        # seam re-tokenization pushed us over; shave another token
        if keep_x > 0:
            keep_x -= 1
        elif keep_y > 0:
            keep_y -= 1
        else:
            raise ExtractionError(
                f"cannot fit template within max_len={max_len}"
            )


def _mask_positions(input_ids: torch.Tensor, mask_id: int,
                    example_ids: Sequence[str]) -> list[int]:
    positions = []
    for row, ex_id in zip(input_ids, example_ids):
        where = (row == mask_id).nonzero(as_tuple=True)[0]
        if len(where) != 1:
            raise ExtractionError(
                f"example {ex_id!r}: expected exactly one mask token after "
                f"tokenization, found {len(where)}"
            )
        positions.append(int(where[0]))
    return positions


def extract_records(model, tokenizer, template: PromptTemplate,
                    rows: Sequence[InputRow], *, dataset: str,
                    batch_size: int = DEFAULT_BATCH_SIZE,
                    max_len: int = DEFAULT_MAX_LEN,
                    split: str = "test",
                    language: str | None = None) -> list[dict]:
    """One record per input row, in input order."""
    label_ids = resolve_label_ids(tokenizer, template.label_words)
    num_labels = template.num_labels
    for i, row in enumerate(rows):
        if not (0 <= row.gold < num_labels):
            raise ExtractionError(
                f"row {i}: gold={row.gold} outside [0, {num_labels})"
            )

    records = []
    mask_id = tokenizer.mask_token_id
    for start in range(0, len(rows), batch_size):
        batch = rows[start:start + batch_size]
        ex_ids = [f"{dataset}-{start + j:06d}" for j in range(len(batch))]
        prompts = [build_prompt(tokenizer, template, r.x, r.y, max_len)
                   for r in batch]
        enc = tokenizer(prompts, padding=True, return_tensors="pt")
        positions = _mask_positions(enc["input_ids"], mask_id, ex_ids)
        with torch.no_grad():
            logits = model(**enc).logits
        for j, (row, ex_id, pos) in enumerate(zip(batch, ex_ids, positions)):
            dist = torch.softmax(logits[j, pos], dim=-1)
            probs = [float(dist[t]) for t in label_ids]
            rec = {"example_id": ex_id, "gold": row.gold, "probs": probs,
                   "split": split}
            if language is not None:
                rec["language"] = language
            records.append(rec)
    return records


def extract_priors(model, tokenizer, template: PromptTemplate, *,
                   max_len: int = DEFAULT_MAX_LEN) -> dict:
    """Both content-free prior vectors for the template's label words.

    mask_only: the model's mask token alone between its boundary tokens.
    empty_template: the pattern instantiated with empty slot contents.
    """
    label_ids = resolve_label_ids(tokenizer, template.label_words)
    mask_id = tokenizer.mask_token_id
    prompts = {
        "mask_only": tokenizer.mask_token,
        "empty_template": build_prompt(
            tokenizer, template, "", "" if template.needs_y else None, max_len),
    }
    out = {}
    for name, prompt in prompts.items():
        enc = tokenizer(prompt, return_tensors="pt")
        positions = _mask_positions(enc["input_ids"], mask_id, [name])
        with torch.no_grad():
            logits = model(**enc).logits
        dist = torch.softmax(logits[0, positions[0]], dim=-1)
        out[name] = [float(dist[t]) for t in label_ids]
    return out


# ---------------------------------------------------------------------------
# input parsing and output writing (the engine's file formats)
# ---------------------------------------------------------------------------


def read_rows(path: str | Path) -> list[InputRow]:
    """Read (x, gold) or (x, y, gold) rows from a CSV or TSV file.

    Delimiter follows the extension (.tsv = tab, otherwise comma). A header
    row is skipped when its last column is not an integer.
    """
    path = Path(path)
    delim = "\t" if path.suffix.lower() == ".tsv" else ","
    rows: list[InputRow] = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, cols in enumerate(csv.reader(fh, delimiter=delim), start=1):
            if not cols or all(not c.strip() for c in cols):
                continue
            if len(cols) not in (2, 3):
                raise ExtractionError(
                    f"{path.name}:{lineno}: expected 2 or 3 columns, got {len(cols)}"
                )
            try:
                gold = int(cols[-1])
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ExtractionError(
                    f"{path.name}:{lineno}: gold column {cols[-1]!r} is not an integer"
                ) from None
            x = cols[0]
            y = cols[1] if len(cols) == 3 else None
            rows.append(InputRow(x=x, y=y, gold=gold))
    if not rows:
        raise ExtractionError(f"{path.name}: no input rows found")
    return rows


def _atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_records_jsonl(path: str | Path, records: Sequence[dict],
                        meta: dict | None = None) -> None:
    lines = []
    if meta is not None:
        lines.append(json.dumps({"_meta": meta}, sort_keys=True))
    lines.extend(json.dumps(rec) for rec in records)
    _atomic_write(path, "\n".join(lines) + "\n")


def write_priors_json(path: str | Path, priors: dict) -> None:
    _atomic_write(path, json.dumps(
        {"mask_only": priors["mask_only"],
         "empty_template": priors["empty_template"]}, indent=2) + "\n")


def write_manifest_json(path: str | Path, template: PromptTemplate, *,
                        metric: str = "accuracy", balanced: bool = True,
                        language: str | None = None) -> None:
    payload = {
        "task": template.task,
        "labels": list(template.label_words),
        "label_words": list(template.label_words),
        "template_id": template.template_id,
        "metric": metric,
        "balanced": balanced,
    }
    if language is not None:
        payload["language"] = language
    _atomic_write(path, json.dumps(payload, indent=2) + "\n")
