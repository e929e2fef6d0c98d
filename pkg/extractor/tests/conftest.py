import pytest

# the tiny checkpoint is constructed locally: no network, no caches
VOCAB = """[PAD]
[UNK]
[CLS]
[SEP]
[MASK]
good
bad
terrible
ok
great
all
in
it
was
news
:
.
,
!
?
the
a
and
worked
as
stated
this
is
not
very
really
movie
book
so
much
fun
boring
slow
fast
##s
##ing
world
sports
business
tech
yes
no
maybe
question
1
2
are
different
same
right
wrong
linguistially""".split("\n")


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    import torch
    from transformers import BertConfig, BertForMaskedLM, BertTokenizerFast

    ckpt = tmp_path_factory.mktemp("tinybert")
    vocab_file = ckpt / "vocab.txt"
    vocab_file.write_text("\n".join(VOCAB) + "\n")
    tokenizer = BertTokenizerFast(vocab=str(vocab_file), do_lower_case=True)
    tokenizer.save_pretrained(ckpt)

    config = BertConfig(vocab_size=len(VOCAB), hidden_size=32,
                        num_hidden_layers=2, num_attention_heads=2,
                        intermediate_size=64, max_position_embeddings=160)
    torch.manual_seed(1234)
    model = BertForMaskedLM(config)
    model.save_pretrained(ckpt)
    return str(ckpt)


@pytest.fixture(scope="session")
def tiny_model(tiny_checkpoint):
    from calprompt_extractor.extract import load_model

    return load_model(tiny_checkpoint)
