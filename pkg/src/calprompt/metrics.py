"""Accuracy, F1 and threshold-bias analysis.

Convention: balanced tasks report accuracy, imbalanced ones F1 (macro by
default).  The threshold sweep reproduces the single-probability bias
picture: accuracy of a binary task as a function of the decision threshold
on the positive label word's probability.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    EPSILON,
    CalibrationError,
    CalibratorSpec,
    DimensionError,
    DomainError,
    LabelProbRecord,
    PriorProfile,
    TaskManifest,
    _clamped,
    apply_cbm,
    apply_penalty,
    apply_pmi,
    renormalize,
)

F1_VARIANTS = ("macro", "micro", "binary")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Integer counts, rows = gold, columns = predicted."""

    counts: tuple[tuple[int, ...], ...]

    @classmethod
    def from_predictions(cls, preds: Sequence[int], golds: Sequence[int],
                         num_labels: int) -> "ConfusionMatrix":
        _check_pred_gold(preds, golds)
        counts = np.zeros((num_labels, num_labels), dtype=np.int64)
        for pred, gold in zip(preds, golds):
            if not (0 <= gold < num_labels and 0 <= pred < num_labels):
                raise CalibrationError(
                    f"label index out of range: gold={gold}, pred={pred}, L={num_labels}"
                )
            counts[gold][pred] += 1
        return cls(counts=tuple(tuple(int(c) for c in row) for row in counts))

    @property
    def num_labels(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return int(sum(sum(row) for row in self.counts))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.int64)


def _check_pred_gold(preds: Sequence[int], golds: Sequence[int]) -> None:
    if len(preds) != len(golds):
        raise DimensionError(
            f"preds and golds differ in length ({len(preds)} vs {len(golds)})"
        )
    if len(preds) == 0:
        raise CalibrationError("cannot score an empty prediction list")


def accuracy(preds: Sequence[int], golds: Sequence[int]) -> float:
    """Fraction of positions where the prediction equals the gold label."""
    _check_pred_gold(preds, golds)
    hits = sum(1 for p, g in zip(preds, golds) if p == g)
    return hits / len(preds)


def _per_class_prf(cm: ConfusionMatrix) -> list[tuple[float, float, float]]:
    arr = cm.as_array()
    out = []
    for i in range(cm.num_labels):
        tp = float(arr[i, i])
        fp = float(arr[:, i].sum() - arr[i, i])
        fn = float(arr[i, :].sum() - arr[i, i])
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        out.append((precision, recall, f1))
    return out


def macro_f1(preds: Sequence[int], golds: Sequence[int], num_labels: int) -> float:
    """Unweighted mean of per-class F1; a class with zero denominators scores 0."""
    cm = ConfusionMatrix.from_predictions(preds, golds, num_labels)
    per_class = _per_class_prf(cm)
    return sum(f1 for _, _, f1 in per_class) / num_labels


def f1_score(preds: Sequence[int], golds: Sequence[int], num_labels: int,
             variant: str = "macro", positive_label: int = 1) -> float:
    """macro, micro, or binary (single positive class) F1."""
    if variant not in F1_VARIANTS:
        raise CalibrationError(f"unknown f1 variant {variant!r}, expected {F1_VARIANTS}")
    if variant == "macro":
        return macro_f1(preds, golds, num_labels)
    cm = ConfusionMatrix.from_predictions(preds, golds, num_labels)
    if variant == "binary":
        if not (0 <= positive_label < num_labels):
            raise CalibrationError(f"positive label {positive_label} outside [0, {num_labels})")
        return _per_class_prf(cm)[positive_label][2]
    # micro: pool tp/fp/fn over classes
    arr = cm.as_array()
    tp = float(np.trace(arr))
    fp = float(arr.sum() - np.trace(arr))
    fn = fp
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    return 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


# ---------------------------------------------------------------------------
# Threshold sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThresholdCurve:
    """Accuracy per threshold; best_tau is the smallest maximizer."""

    grid: tuple[tuple[float, float], ...]
    best_tau: float
    best_accuracy: float


def _threshold_grid(grid_step: float) -> np.ndarray:
    # i/m instead of i*step where 1/step is integral: keeps nice decimal
    # thresholds (0.96, not 0.9600000000000001) on default grids.
    inv = 1.0 / grid_step
    m = round(inv)
    if abs(inv - m) < 1e-9:
        taus = np.array([i / m for i in range(m + 1)])
    else:
        taus = np.arange(0.0, 1.0, grid_step)
        taus = np.append(taus, 1.0)
    return taus


def threshold_sweep(
    pos_probs: Sequence[float],
    golds: Sequence[int],
    grid_step: float = 0.01,
) -> ThresholdCurve:
    """Sweep the positive-class decision threshold over {0, step, ..., 1}.

    An example is predicted positive iff its positive probability is >= tau
    (inclusive).  Returns the full curve plus the best threshold, with ties
    on accuracy resolved toward the smallest tau.
    """
    probs = np.asarray(pos_probs, dtype=float)
    gold_arr = np.asarray(golds)
    if probs.ndim != 1 or probs.size == 0 or probs.size != gold_arr.size:
        raise DimensionError("pos_probs and golds must be equal-length, non-empty")
    if not set(np.unique(gold_arr)) <= {0, 1}:
        raise CalibrationError("threshold sweep needs binary golds in {0, 1}")
    if np.any(probs < 0) or np.any(probs > 1):
        raise CalibrationError("pos_probs entries must lie in [0, 1]")
    if not (0.0 < grid_step <= 0.5):
        raise CalibrationError(f"grid_step must be in (0, 0.5], got {grid_step}")

    taus = _threshold_grid(grid_step)
    preds = probs[None, :] >= taus[:, None]
    accs = (preds == gold_arr[None, :].astype(bool)).mean(axis=1)

    best_index = int(np.argmax(accs))  # first max = smallest tau
    grid = tuple((float(t), float(a)) for t, a in zip(taus, accs))
    return ThresholdCurve(grid=grid, best_tau=float(taus[best_index]),
                          best_accuracy=float(accs[best_index]))


def positive_probabilities(
    records: Sequence[LabelProbRecord],
    positive_label: int = 1,
    *,
    normalized: bool = False,
    eps: float = EPSILON,
) -> list[float]:
    """Positive-label probability per record, raw by default.

    ``normalized`` switches to the two-word ratio p_pos / (p_pos + p_neg)
    (binary tasks only).
    """
    out = []
    for rec in records:
        if not (0 <= positive_label < len(rec.probs)):
            raise CalibrationError(
                f"record {rec.example_id!r}: positive label {positive_label} out of range"
            )
        p = rec.probs[positive_label]
        if normalized:
            if len(rec.probs) != 2:
                raise CalibrationError("normalized positive probability needs a binary task")
            other = rec.probs[1 - positive_label]
            p = p / max(p + other, eps)
        out.append(float(p))
    return out


# ---------------------------------------------------------------------------
# Record-set evaluation
# ---------------------------------------------------------------------------


def score_records(
    records: Sequence[LabelProbRecord],
    calibrator: CalibratorSpec,
    manifest: TaskManifest,
    priors: PriorProfile | None = None,
    *,
    eps: float = EPSILON,
    strict: bool = False,
    renormalize_probs: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Apply a calibrator to a record set; returns (scores N x L, preds N).

    cbm consumes the whole set before producing any score.  Ties in a score
    row resolve toward the lowest label index.
    """
    if not records:
        raise CalibrationError("cannot score an empty record set")
    num_labels = manifest.num_labels
    for rec in records:
        if len(rec.probs) != num_labels:
            raise DimensionError(
                f"record {rec.example_id!r}: probs has {len(rec.probs)} entries, "
                f"task defines {num_labels}"
            )

    matrix = np.asarray([rec.probs for rec in records], dtype=float)
    if renormalize_probs:
        matrix = renormalize(matrix, eps=eps, strict=strict)

    spec = calibrator.materialized(priors, eps=eps, strict=strict)
    method = spec.method
    if method == "none":
        scores = matrix
    elif method == "cc":
        scores = matrix * np.asarray(spec.cc_w) + np.asarray(spec.cc_b)
    elif method == "pmi_dc":
        if priors is None:
            raise CalibrationError("pmi_dc needs a prior profile (empty-template prior)")
        scores = apply_pmi(matrix, priors.empty_template, eps=eps, strict=strict)
    elif method == "cbm":
        if spec.cbm_means is not None:
            means = _clamped(np.asarray(spec.cbm_means, dtype=float), eps, strict,
                             "cbm column means")
            scores = matrix / means
        else:
            scores, _ = apply_cbm(matrix, eps=eps, strict=strict)
    elif method == "penalty":
        scores = apply_penalty(matrix, spec.penalty)
    else:
        raise CalibrationError(f"unknown method {method!r}")

    if np.isnan(scores).any():
        raise DomainError("calibrated scores contain NaN")
    preds = np.argmax(scores, axis=1)  # first max = lowest-index tie-break
    return scores, preds


def evaluate(
    records: Sequence[LabelProbRecord],
    calibrator: CalibratorSpec,
    manifest: TaskManifest,
    priors: PriorProfile | None = None,
    *,
    eps: float = EPSILON,
    strict: bool = False,
    renormalize_probs: bool = False,
    f1_variant: str = "macro",
    positive_label: int = 1,
) -> tuple[float, ConfusionMatrix]:
    """Calibrate, predict, and compute the manifest's metric."""
    _, preds = score_records(records, calibrator, manifest, priors, eps=eps,
                             strict=strict, renormalize_probs=renormalize_probs)
    golds = [rec.gold for rec in records]
    pred_list = [int(p) for p in preds]
    cm = ConfusionMatrix.from_predictions(pred_list, golds, manifest.num_labels)
    if manifest.metric == "accuracy":
        value = accuracy(pred_list, golds)
    else:
        value = f1_score(pred_list, golds, manifest.num_labels,
                         variant=f1_variant, positive_label=positive_label)
    return value, cm
