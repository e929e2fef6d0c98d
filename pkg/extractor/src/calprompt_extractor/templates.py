"""Cloze prompt templates and their label words, one entry per task.

Patterns are kept verbatim as published for the benchmark tasks, including
oddities that belong to the templates themselves: the CoLA pattern's
"linguistially" spelling, and the Amazon pattern producing "!." when the
input ends with punctuation (slots are substituted verbatim, nothing is
smoothed). Two typesetting artifacts are normalized and noted inline: the
PAWS-X mask/slot run-together and a doubled space in the QQP pattern. The
Yahoo label-word list is typeset truncated at four entries; the registry
completes it with the dataset's canonical category head-words.

Slot grammar: ``[X]`` input text (required), ``[Y]`` second text (optional,
pairwise tasks), ``[MASK]`` the single mask slot, replaced at instantiation
time by the model's own mask token string.
"""

from dataclasses import dataclass

MASK_SLOT = "[MASK]"
X_SLOT = "[X]"
Y_SLOT = "[Y]"


class TemplateError(ValueError):
    """Bad template definition or bad instantiation arguments."""


@dataclass(frozen=True)
class PromptTemplate:
    """One cloze pattern with its ordered label words."""

    template_id: str
    task: str
    pattern: str
    label_words: tuple[str, ...]

    def validate(self) -> None:
        if not self.template_id or not self.task:
            raise TemplateError("template_id and task must be non-empty")
        if self.pattern.count(MASK_SLOT) != 1:
            raise TemplateError(
                f"{self.template_id}: pattern needs exactly one {MASK_SLOT} slot"
            )
        if self.pattern.count(X_SLOT) != 1:
            raise TemplateError(
                f"{self.template_id}: pattern needs exactly one {X_SLOT} slot"
            )
        if self.pattern.count(Y_SLOT) > 1:
            raise TemplateError(
                f"{self.template_id}: at most one {Y_SLOT} slot allowed"
            )
        if len(self.label_words) < 2:
            raise TemplateError(f"{self.template_id}: need at least two label words")
        if len(set(self.label_words)) != len(self.label_words):
            raise TemplateError(f"{self.template_id}: duplicate label words")

    @property
    def needs_y(self) -> bool:
        return Y_SLOT in self.pattern

    @property
    def num_labels(self) -> int:
        return len(self.label_words)


def instantiate(template: PromptTemplate, x: str, y: str | None = None,
                mask_token: str = MASK_SLOT) -> str:
    """Fill the slots verbatim; the mask slot becomes ``mask_token``.

    ``y`` must be given exactly when the pattern has a ``[Y]`` slot. The
    empty string is a valid slot value: that is how the empty-template
    prior prompt is built.
    """
    if template.needs_y and y is None:
        raise TemplateError(f"{template.template_id}: pattern has {Y_SLOT}, y missing")
    if not template.needs_y and y is not None:
        raise TemplateError(f"{template.template_id}: pattern has no {Y_SLOT} slot")
    prompt = template.pattern.replace(X_SLOT, x)
    if template.needs_y:
        prompt = prompt.replace(Y_SLOT, y)
    return prompt.replace(MASK_SLOT, mask_token)


REGISTRY: tuple[PromptTemplate, ...] = (
    PromptTemplate("agnews-v1", "ag_news",
                   "[MASK] News: [X]",
                   ("World", "Sports", "Business", "Tech")),
    PromptTemplate("amazon-p", "amazon_polarity",
                   "[X]. All in all, it was [MASK].",
                   ("bad", "good")),
    PromptTemplate("amazon-p5", "amazon_reviews",
                   "[X]. All in all, it was [MASK].",
                   ("terrible", "bad", "ok", "good", "great")),
    PromptTemplate("xnli-v1", "xnli",
                   "[X]? [MASK], [Y]",
                   ("Yes", "Maybe", "No")),
    # published list truncated after Education; completed with the dataset's
    # remaining category head-words
    PromptTemplate("yahoo-v1", "yahoo",
                   "[MASK] Question: [X] [Y]",
                   ("Society", "Science", "Health", "Education", "Computers",
                    "Sports", "Business", "Entertainment", "Family", "Politics")),
    # typeset runs the mask into the second slot; normalized to one space
    PromptTemplate("pawsx-v1", "paws_x",
                   "[X] . [MASK] [Y]",
                   ("Wrong", "Right")),
    PromptTemplate("cola-v1", "cola",
                   "[X] . It is linguistially [MASK].",
                   ("wrong", "right")),
    PromptTemplate("mrpc-v1", "mrpc",
                   "[X]? [MASK], [Y]",
                   ("Wrong", "Right")),
    # typeset has a doubled space after "Question 2:"; normalized
    PromptTemplate("qqp-v1", "qqp",
                   "Question 1: [X] Question 2: [Y] "
                   "Question 1 and Question 2 are [MASK]",
                   ("different", "same")),
    PromptTemplate("rte-v1", "rte",
                   "[X]? [MASK], [Y]",
                   ("Wrong", "Right")),
    PromptTemplate("wnli-v1", "wnli",
                   "[X]? [MASK], [Y]",
                   ("Wrong", "Right")),
)


def get_template(template_id: str) -> PromptTemplate:
    for t in REGISTRY:
        if t.template_id == template_id:
            return t
    known = ", ".join(t.template_id for t in REGISTRY)
    raise TemplateError(f"unknown template {template_id!r}; known: {known}")


def templates_for_task(task: str) -> tuple[PromptTemplate, ...]:
    out = tuple(t for t in REGISTRY if t.task == task)
    if not out:
        known = ", ".join(sorted({t.task for t in REGISTRY}))
        raise TemplateError(f"unknown task {task!r}; known: {known}")
    return out
