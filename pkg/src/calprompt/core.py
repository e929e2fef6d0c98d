"""Domain types and the four label-word calibration transforms.

A cloze-prompt classifier scores each class by the masked-LM probability of
its label word.  Those probabilities carry the model's prior bias toward
frequent words; the transforms here remove it:

    cc        affine rescale by the inverse content-free prior
    pmi_dc    log-ratio against the empty-template prior
    cbm       divide by the per-label mean over the whole evaluated set
    penalty   subtract a per-label penalty (trainable, init = prior)

All transforms return generic real-valued scores, not probabilities;
downstream code must never assume normalization.  Divisions and logs clamp
their operands to ``EPSILON`` by default; strict mode raises instead.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

EPSILON = 1e-12

METHODS = ("none", "cc", "pmi_dc", "cbm", "penalty")
TRAINABLE_METHODS = ("cc", "penalty")
METRICS = ("accuracy", "macro_f1")
SPLITS = ("train", "test")

# Label-word probabilities are a slice of a softmax; allow this much float
# slack on their sum.
PROB_SUM_SLACK = 1e-6


class CalibrationError(ValueError):
    """Base class for all engine errors."""


class DimensionError(CalibrationError):
    """Vector or matrix shapes do not line up."""


class DomainError(CalibrationError):
    """Operand outside the mathematical domain (zero divisor, log 0, NaN)."""


class ValidationError(CalibrationError):
    """Input files or in-memory values violate a declared invariant."""


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LabelProbRecord:
    """One example: gold label index plus raw MLM label-word probabilities.

    ``probs[i]`` is the softmax mass of label word i at the mask position,
    taken from the full-vocabulary distribution (so the entries need not sum
    to one).
    """

    example_id: str
    gold: int
    probs: tuple[float, ...]
    split: str = "test"
    language: str | None = None

    def validate(self, num_labels: int | None = None) -> None:
        """Self-checks; pass num_labels to also enforce the task's width."""
        if num_labels is not None and len(self.probs) != num_labels:
            raise DimensionError(
                f"record {self.example_id!r}: probs has {len(self.probs)} entries, "
                f"task defines {num_labels} label words"
            )
        if len(self.probs) == 0:
            raise ValidationError(f"record {self.example_id!r}: probs is empty")
        for i, p in enumerate(self.probs):
            if not (0.0 <= p <= 1.0):
                raise ValidationError(
                    f"record {self.example_id!r}: probs[{i}]={p!r} outside [0, 1]"
                )
        total = sum(self.probs)
        if total > 1.0 + PROB_SUM_SLACK:
            raise ValidationError(
                f"record {self.example_id!r}: probs sum to {total!r} > 1"
            )
        upper = num_labels if num_labels is not None else len(self.probs)
        if not (0 <= self.gold < upper):
            raise ValidationError(
                f"record {self.example_id!r}: gold={self.gold} outside [0, {upper})"
            )
        if self.split not in SPLITS:
            raise ValidationError(
                f"record {self.example_id!r}: split={self.split!r} not in {SPLITS}"
            )


@dataclass(frozen=True)
class PriorProfile:
    """Prior label-word probabilities from two content-free probes.

    ``mask_only``      model output for an input that is only the mask token
    ``empty_template`` model output for the template instantiated with empty
                       input slots
    """

    mask_only: tuple[float, ...]
    empty_template: tuple[float, ...]

    def validate(self, num_labels: int | None = None) -> None:
        """Self-checks; pass num_labels to also enforce the task's width."""
        if len(self.mask_only) != len(self.empty_template):
            raise DimensionError(
                f"priors.mask_only has {len(self.mask_only)} entries, "
                f"priors.empty_template has {len(self.empty_template)}"
            )
        if len(self.mask_only) == 0:
            raise ValidationError("priors must cover at least one label word")
        for name, vec in (("mask_only", self.mask_only),
                          ("empty_template", self.empty_template)):
            if num_labels is not None and len(vec) != num_labels:
                raise DimensionError(
                    f"priors.{name} has {len(vec)} entries, task defines {num_labels}"
                )
            for i, p in enumerate(vec):
                if not (0.0 <= p <= 1.0):
                    raise ValidationError(
                        f"priors.{name}[{i}]={p!r} outside [0, 1]"
                    )


@dataclass(frozen=True)
class TaskManifest:
    """Task description: label names, label words, metric convention."""

    task: str
    labels: tuple[str, ...]
    label_words: tuple[str, ...]
    template_id: str
    metric: str
    balanced: bool
    language: str = "en"

    @property
    def num_labels(self) -> int:
        return len(self.labels)

    def validate(self, enforce_metric_convention: bool = True) -> None:
        if len(self.labels) != len(self.label_words):
            raise DimensionError(
                f"manifest {self.task!r}: {len(self.labels)} labels vs "
                f"{len(self.label_words)} label words"
            )
        if len(self.labels) < 2:
            raise ValidationError(f"manifest {self.task!r}: needs at least 2 labels")
        if len(set(self.label_words)) != len(self.label_words):
            raise ValidationError(f"manifest {self.task!r}: label words not distinct")
        if self.metric not in METRICS:
            raise ValidationError(
                f"manifest {self.task!r}: metric={self.metric!r} not in {METRICS}"
            )
        # Convention: balanced tasks report accuracy, imbalanced ones F1.
        if enforce_metric_convention and (self.metric == "accuracy") != self.balanced:
            raise ValidationError(
                f"manifest {self.task!r}: metric={self.metric!r} with "
                f"balanced={self.balanced} breaks the accuracy<->balanced convention "
                "(pass allow_metric_mismatch to override)"
            )


@dataclass(frozen=True)
class CalibratorSpec:
    """A calibration method plus whatever parameter state it carries.

    Only the fields relevant to ``method`` are populated:

        cc        cc_w (diagonal of W, positive), cc_b
        penalty   penalty (pi, subtracted from the probabilities; equals the
                  positive mask-only prior at zero-shot initialization)
        cbm       cbm_means (column means of the evaluated set; absent until
                  an evaluated set has been seen)
        none, pmi_dc   no parameters
    """

    method: str
    cc_w: tuple[float, ...] | None = None
    cc_b: tuple[float, ...] | None = None
    penalty: tuple[float, ...] | None = None
    cbm_means: tuple[float, ...] | None = None

    _FIELDS_BY_METHOD = {
        "none": (),
        "cc": ("cc_w", "cc_b"),
        "pmi_dc": (),
        "cbm": ("cbm_means",),
        "penalty": ("penalty",),
    }

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}")
        relevant = self._FIELDS_BY_METHOD[self.method]
        for name in ("cc_w", "cc_b", "penalty", "cbm_means"):
            value = getattr(self, name)
            if value is not None and name not in relevant:
                raise ValidationError(
                    f"calibrator field {name} is not relevant to method {self.method!r}"
                )
        if self.cc_w is not None and any(w <= 0 for w in self.cc_w):
            raise ValidationError("cc_w entries must be positive")
        if self.cbm_means is not None and any(m <= 0 for m in self.cbm_means):
            raise ValidationError("cbm_means entries must be positive")

    def materialized(
        self,
        priors: PriorProfile | None,
        *,
        eps: float = EPSILON,
        strict: bool = False,
    ) -> "CalibratorSpec":
        """Fill in zero-shot parameters from the prior profile.

        cc: W = diag(mask_only)^-1, b = 0.  penalty: pi = mask_only.
        cbm means are left unset (they come from the evaluated set).
        Already-populated parameters are kept (trained state wins).
        """
        self.validate()
        if self.method == "cc" and self.cc_w is None:
            if priors is None:
                raise CalibrationError("cc needs a prior profile or explicit cc_w")
            prior = _clamped(np.asarray(priors.mask_only, dtype=float), eps, strict,
                             "mask_only prior")
            w = 1.0 / prior
            b = self.cc_b if self.cc_b is not None else (0.0,) * len(prior)
            return replace(self, cc_w=tuple(float(x) for x in w), cc_b=tuple(b))
        if self.method == "penalty" and self.penalty is None:
            if priors is None:
                raise CalibrationError("penalty needs a prior profile or explicit penalty")
            return replace(self, penalty=tuple(float(p) for p in priors.mask_only))
        return self


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------


def _as_array(values: Sequence[float] | np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim not in (1, 2) or arr.shape[-1] == 0:
        raise DimensionError(f"{name} must be a non-empty vector or matrix")
    return arr


def _check_same_width(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(
            f"{what}: length mismatch ({a.shape[-1]} vs {b.shape[-1]})"
        )


def _clamped(values: np.ndarray, eps: float, strict: bool, what: str) -> np.ndarray:
    if strict:
        if np.any(values == 0.0):
            raise DomainError(f"{what} contains an exact zero and clamping is disabled")
        return values
    return np.maximum(values, eps)


def apply_cc(
    probs: Sequence[float] | np.ndarray,
    prior: Sequence[float],
    b: Sequence[float] | None = None,
    *,
    eps: float = EPSILON,
    strict: bool = False,
) -> np.ndarray:
    """Contextual calibration: q_i = probs_i / prior_i + b_i.

    ``prior`` is the mask-only (content-free) distribution; zero-shot use
    passes b = 0.  Accepts a single vector or an (N, L) matrix of probs.
    """
    p = _as_array(probs, "probs")
    pr = _as_array(prior, "prior")
    _check_same_width(p, pr, "apply_cc")
    pr = _clamped(pr, eps, strict, "cc prior")
    if b is None:
        bv = np.zeros(pr.shape[-1])
    else:
        bv = _as_array(b, "b")
        _check_same_width(p, bv, "apply_cc bias")
    return p / pr + bv


def apply_pmi(
    probs: Sequence[float] | np.ndarray,
    prior: Sequence[float],
    *,
    eps: float = EPSILON,
    strict: bool = False,
) -> np.ndarray:
    """Domain-conditional PMI: q_i = ln(probs_i / prior_i).

    ``prior`` is the empty-template distribution p(y|t).
    """
    p = _as_array(probs, "probs")
    pr = _as_array(prior, "prior")
    _check_same_width(p, pr, "apply_pmi")
    p = _clamped(p, eps, strict, "pmi probabilities")
    pr = _clamped(pr, eps, strict, "pmi prior")
    return np.log(p / pr)


def apply_cbm(
    prob_matrix: Sequence[Sequence[float]] | np.ndarray,
    *,
    eps: float = EPSILON,
    strict: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Calibration by marginalization over the whole evaluated set.

    Two-pass by construction: column means over all N rows are computed
    before any score is produced, in the rows' canonical (given) order, so
    the reduction does not depend on any concurrent arrival order.
    Returns (scores, column_means).
    """
    m = np.asarray(prob_matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise CalibrationError("apply_cbm needs a non-empty N x L matrix")
    means = m.mean(axis=0)
    means = _clamped(means, eps, strict, "cbm column means")
    return m / means, means


def apply_penalty(
    probs: Sequence[float] | np.ndarray,
    penalty: Sequence[float],
) -> np.ndarray:
    """Probability penalty: q_i = probs_i - penalty_i.

    The stored penalty is the positive prior at zero-shot initialization;
    subtracting it is value-identical to adding a negative-prior vector.
    """
    p = _as_array(probs, "probs")
    pen = _as_array(penalty, "penalty")
    _check_same_width(p, pen, "apply_penalty")
    return p - pen


def predict(scores: Sequence[float] | np.ndarray) -> int:
    """Index of the maximum score; ties break toward the lowest index."""
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise CalibrationError("predict needs a non-empty score vector")
    if np.isnan(s).any():
        raise DomainError("scores contain NaN")
    return int(np.argmax(s))


def renormalize(
    probs: Sequence[float] | np.ndarray,
    *,
    eps: float = EPSILON,
    strict: bool = False,
) -> np.ndarray:
    """Rescale label-word probabilities to sum to one (optional preprocessing).

    Penalty and cbm results are not invariant to this, so it is off by
    default everywhere and only enabled by an explicit flag.
    """
    p = _as_array(probs, "probs")
    total = p.sum(axis=-1, keepdims=True)
    total = _clamped(total, eps, strict, "probability sum")
    return p / total


def renormalized_record(
    record: LabelProbRecord,
    *,
    eps: float = EPSILON,
    strict: bool = False,
) -> LabelProbRecord:
    scaled = renormalize(record.probs, eps=eps, strict=strict)
    return replace(record, probs=tuple(float(x) for x in scaled))
