import math

import pytest

from calprompt_extractor.extract import (
    ExtractionError,
    InputRow,
    build_prompt,
    extract_priors,
    extract_records,
    read_rows,
    resolve_label_ids,
)
from calprompt_extractor.templates import PromptTemplate, get_template

AMAZON = get_template("amazon-p")


def test_resolve_label_ids_single_tokens(tiny_model):
    _, tokenizer = tiny_model
    ids = resolve_label_ids(tokenizer, ("good", "bad"))
    assert len(ids) == 2 and len(set(ids)) == 2
    assert all(isinstance(i, int) and i != tokenizer.unk_token_id for i in ids)


def test_resolve_label_ids_rejects_out_of_vocab(tiny_model):
    _, tokenizer = tiny_model
    with pytest.raises(ExtractionError, match="excellent"):
        resolve_label_ids(tokenizer, ("good", "excellent"))


def test_records_order_ids_and_prob_bounds(tiny_model):
    model, tokenizer = tiny_model
    rows = [InputRow(x=f"this movie was fun {i}", y=None, gold=i % 2)
            for i in range(11)]
    records = extract_records(model, tokenizer, AMAZON, rows,
                              dataset="amazon_polarity", batch_size=4)
    assert len(records) == 11
    assert [r["example_id"] for r in records] == \
        [f"amazon_polarity-{i:06d}" for i in range(11)]
    assert [r["gold"] for r in records] == [i % 2 for i in range(11)]
    for rec in records:
        assert rec["split"] == "test"
        assert len(rec["probs"]) == 2
        assert all(0.0 <= p <= 1.0 for p in rec["probs"])
        assert sum(rec["probs"]) <= 1.0 + 1e-9


def test_records_deterministic_across_runs(tiny_model):
    model, tokenizer = tiny_model
    rows = [InputRow(x="worked as stated!", y=None, gold=1),
            InputRow(x="so boring and slow", y=None, gold=0),
            InputRow(x="really fun", y=None, gold=1)]
    a = extract_records(model, tokenizer, AMAZON, rows, dataset="d")
    b = extract_records(model, tokenizer, AMAZON, rows, dataset="d")
    assert a == b  # bitwise: same floats, same order


def test_batch_size_does_not_change_record_count(tiny_model):
    model, tokenizer = tiny_model
    rows = [InputRow(x=f"text {i}", y=None, gold=0) for i in range(7)]
    for bs in (1, 2, 8):
        records = extract_records(model, tokenizer, AMAZON, rows,
                                  dataset="d", batch_size=bs)
        assert [r["example_id"] for r in records] == \
            [f"d-{i:06d}" for i in range(7)]


def test_gold_out_of_range_rejected(tiny_model):
    model, tokenizer = tiny_model
    rows = [InputRow(x="fine", y=None, gold=2)]
    with pytest.raises(ExtractionError, match="gold=2"):
        extract_records(model, tokenizer, AMAZON, rows, dataset="d")


def test_input_containing_mask_literal_rejected(tiny_model):
    model, tokenizer = tiny_model
    rows = [InputRow(x="it was [MASK] fun", y=None, gold=1)]
    with pytest.raises(ExtractionError, match="exactly one mask"):
        extract_records(model, tokenizer, AMAZON, rows, dataset="d")


def test_language_field_passthrough(tiny_model):
    model, tokenizer = tiny_model
    rows = [InputRow(x="fun", y=None, gold=1)]
    records = extract_records(model, tokenizer, AMAZON, rows, dataset="d",
                              language="en", split="train")
    assert records[0]["language"] == "en"
    assert records[0]["split"] == "train"


def test_truncation_cuts_input_never_template(tiny_model):
    model, tokenizer = tiny_model
    long_x = " ".join(["really very fun movie"] * 60)
    max_len = 24
    prompt = build_prompt(tokenizer, AMAZON, long_x, None, max_len)
    ids = tokenizer.encode(prompt)
    assert len(ids) <= max_len
    toks = tokenizer.convert_ids_to_tokens(ids)
    assert toks.count(tokenizer.mask_token) == 1
    # the template tail survives verbatim
    assert prompt.endswith(f"All in all, it was {tokenizer.mask_token}.")
    # and inference still works on the truncated prompt
    records = extract_records(model, tokenizer, AMAZON,
                              [InputRow(x=long_x, y=None, gold=0)],
                              dataset="d", max_len=max_len)
    assert len(records) == 1


def test_truncation_prefers_cutting_x_before_y(tiny_model):
    _, tokenizer = tiny_model
    pairwise = get_template("rte-v1")
    long_x = " ".join(["the movie was fun"] * 40)
    short_y = "it was good"
    prompt = build_prompt(tokenizer, pairwise, long_x, short_y, 32)
    assert len(tokenizer.encode(prompt)) <= 32
    assert prompt.endswith(short_y)  # y kept whole while x absorbs the cut


def test_max_len_too_small_for_template(tiny_model):
    _, tokenizer = tiny_model
    with pytest.raises(ExtractionError, match="max_len"):
        build_prompt(tokenizer, AMAZON, "text", None, 4)


def test_priors_shapes_and_determinism(tiny_model):
    model, tokenizer = tiny_model
    a = extract_priors(model, tokenizer, AMAZON)
    b = extract_priors(model, tokenizer, AMAZON)
    assert a == b
    for key in ("mask_only", "empty_template"):
        vec = a[key]
        assert len(vec) == 2
        assert all(0.0 <= p <= 1.0 for p in vec)
        assert sum(vec) <= 1.0
        assert all(math.isfinite(p) for p in vec)
    assert a["mask_only"] != a["empty_template"]


def test_priors_for_pairwise_template(tiny_model):
    model, tokenizer = tiny_model
    priors = extract_priors(model, tokenizer, get_template("rte-v1"))
    assert len(priors["empty_template"]) == 2


def test_read_rows_formats(tmp_path):
    csv_path = tmp_path / "data.csv"
    csv_path.write_text('text,gold\n"first, with comma",0\nsecond,1\n')
    rows = read_rows(csv_path)
    assert rows == [InputRow(x="first, with comma", y=None, gold=0),
                    InputRow(x="second", y=None, gold=1)]

    tsv_path = tmp_path / "pairs.tsv"
    tsv_path.write_text("premise a\thypothesis a\t0\npremise b\thypothesis b\t2\n")
    rows = read_rows(tsv_path)
    assert rows[0] == InputRow(x="premise a", y="hypothesis a", gold=0)
    assert rows[1].gold == 2


def test_read_rows_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("only-one-column\n")
    with pytest.raises(ExtractionError, match="2 or 3 columns"):
        read_rows(bad)
    bad.write_text("x,gold\n")
    with pytest.raises(ExtractionError, match="no input rows"):
        read_rows(bad)
    bad.write_text("a,0\nb,notanint\n")
    with pytest.raises(ExtractionError, match="notanint"):
        read_rows(bad)
