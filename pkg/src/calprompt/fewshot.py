"""Few-shot training of the trainable calibrators (penalty and cc).

The update rule is a perceptron-style additive step: run the calibrated
scores, and on a misprediction move eta of penalty mass from the gold label
to the predicted one.  Training is strictly sequential; grid cells
(method, shot count, seed) are independent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import (
    EPSILON,
    CalibrationError,
    CalibratorSpec,
    LabelProbRecord,
    PriorProfile,
    TaskManifest,
    ValidationError,
    _clamped,
    predict,
)

log = logging.getLogger(__name__)

DEFAULT_EPOCHS = 10
DEFAULT_LEARNING_RATE = 1e-4
DEFAULT_SEEDS = (42, 421, 512, 1213, 1234)
DEFAULT_SHOT_COUNTS = (1, 2, 4, 8, 16)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the few-shot update loop."""

    epochs: int = DEFAULT_EPOCHS
    learning_rate: float = DEFAULT_LEARNING_RATE
    seed: int = DEFAULT_SEEDS[0]
    shots_per_class: int = DEFAULT_SHOT_COUNTS[0]

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ValidationError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.shots_per_class < 1:
            raise ValidationError(f"shots per class must be >= 1, got {self.shots_per_class}")
        if self.shots_per_class not in DEFAULT_SHOT_COUNTS:
            log.info("nonstandard shot count %d (standard grid: %s)",
                     self.shots_per_class, DEFAULT_SHOT_COUNTS)


@dataclass(frozen=True)
class ShotSet:
    """Few-shot training sample in its final (seed-shuffled) processing order."""

    records: tuple[LabelProbRecord, ...]
    seed: int
    shots_per_class: int
    warnings: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


# ---------------------------------------------------------------------------
# Portable sampling
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """splitmix64: a tiny, portable 64-bit generator.

    state' = state + 0x9E3779B97F4A7C15 (mod 2^64)
    z = state'; z = (z ^ z>>30) * 0xBF58476D1CE4E5B9
    z = (z ^ z>>27) * 0x94D049BB133111EB
    output = z ^ z>>31

    Used for shot sampling so runs replay identically across platforms and
    library versions.  Bounded draws use rejection sampling (no modulo bias).
    """

    def __init__(self, seed: int) -> None:
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("below() needs n >= 1")
        limit = ((1 << 64) // n) * n
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def choose(self, items: list, k: int) -> list:
        """k items uniformly without replacement (partial Fisher-Yates)."""
        pool = list(items)
        for i in range(k):
            j = i + self.below(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]


def sample_shots(
    train_records: Sequence[LabelProbRecord],
    k: int,
    seed: int,
    num_labels: int | None = None,
) -> ShotSet:
    """Draw k records per class, then shuffle the union into processing order.

    Deterministic in (seed, k, source ordering).  Classes holding fewer than
    k records contribute all of theirs and a warning is recorded.
    """
    if not train_records:
        raise CalibrationError("cannot sample shots from an empty train split")
    if k < 1:
        raise CalibrationError(f"shots per class must be >= 1, got {k}")

    by_class: dict[int, list[LabelProbRecord]] = {}
    for rec in train_records:
        by_class.setdefault(rec.gold, []).append(rec)

    classes = sorted(by_class)
    if num_labels is not None:
        classes = list(range(num_labels))

    warnings: list[str] = []
    rng = SplitMix64(seed)
    chosen: list[LabelProbRecord] = []
    for cls in classes:
        members = by_class.get(cls, [])
        if len(members) < k:
            warnings.append(
                f"class {cls}: only {len(members)} train records, wanted {k}"
            )
            chosen.extend(members)
        else:
            chosen.extend(rng.choose(members, k))
    rng.shuffle(chosen)

    for message in warnings:
        log.warning("%s", message)
    return ShotSet(records=tuple(chosen), seed=seed, shots_per_class=k,
                   warnings=tuple(warnings))


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------


def _shot_records(shots: ShotSet | Sequence[LabelProbRecord]) -> Sequence[LabelProbRecord]:
    records = shots.records if isinstance(shots, ShotSet) else shots
    if not records:
        raise CalibrationError("cannot train on an empty shot set")
    return records


def train_penalty(
    shots: ShotSet | Sequence[LabelProbRecord],
    init: Sequence[float],
    cfg: TrainConfig,
) -> np.ndarray:
    """Train the penalty vector: E sequential epochs over the shots.

    Per shot: q = probs - pi, y_hat = argmax(q); on a miss pi[y_hat] += eta
    and pi[gold] -= eta.  Pure function of (shot order, init, epochs, eta);
    the shot order is fixed across epochs.
    """
    records = _shot_records(shots)
    cfg.validate()
    pi = np.array(init, dtype=float)
    eta = cfg.learning_rate
    for _ in range(cfg.epochs):
        for rec in records:
            q = np.asarray(rec.probs, dtype=float) - pi
            y_hat = predict(q)
            if y_hat != rec.gold:
                pi[y_hat] += eta
                pi[rec.gold] -= eta
    return pi


def train_cc(
    shots: ShotSet | Sequence[LabelProbRecord],
    prior: Sequence[float],
    cfg: TrainConfig,
    *,
    eps: float = EPSILON,
    strict: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Train cc's bias under the same loop skeleton as the penalty rule.

    cc_w is fixed at 1/prior (the zero-shot solution); only cc_b moves:
    on a miss cc_b[y_hat] -= eta and cc_b[gold] += eta.
    """
    records = _shot_records(shots)
    cfg.validate()
    prior_arr = _clamped(np.asarray(prior, dtype=float), eps, strict, "cc prior")
    w = 1.0 / prior_arr
    b = np.zeros_like(w)
    eta = cfg.learning_rate
    for _ in range(cfg.epochs):
        for rec in records:
            q = w * np.asarray(rec.probs, dtype=float) + b
            y_hat = predict(q)
            if y_hat != rec.gold:
                b[y_hat] -= eta
                b[rec.gold] += eta
    return w, b


def train_calibrator(
    method: str,
    shots: ShotSet | Sequence[LabelProbRecord],
    priors: PriorProfile,
    cfg: TrainConfig,
    *,
    eps: float = EPSILON,
    strict: bool = False,
) -> CalibratorSpec:
    """Train one calibrator and wrap the result as a CalibratorSpec."""
    if method == "penalty":
        pi = train_penalty(shots, priors.mask_only, cfg)
        return CalibratorSpec(method="penalty", penalty=tuple(float(x) for x in pi))
    if method == "cc":
        w, b = train_cc(shots, priors.mask_only, cfg, eps=eps, strict=strict)
        return CalibratorSpec(method="cc", cc_w=tuple(float(x) for x in w),
                              cc_b=tuple(float(x) for x in b))
    raise CalibrationError(f"method {method!r} is not trainable (expected cc or penalty)")


# ---------------------------------------------------------------------------
# Experiment grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridCell:
    """One (method, shot count) cell: per-seed metric values plus summary."""

    method: str
    shots: int
    seeds: tuple[int, ...]
    values: tuple[float, ...]
    mean: float
    std: float


@dataclass(frozen=True)
class EvalReport:
    """Grid results for one task, with the uncalibrated baseline attached."""

    task: str
    metric: str
    baseline: float
    cells: tuple[GridCell, ...]


def _summarize(method: str, shots: int, seeds: Sequence[int],
               values: Sequence[float]) -> GridCell:
    vals = np.asarray(values, dtype=float)
    mean = float(vals.mean())
    # Sample std (ddof=1); a single seed has no spread by definition.
    std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    return GridCell(method=method, shots=shots, seeds=tuple(seeds),
                    values=tuple(float(v) for v in vals), mean=mean, std=std)


def run_grid(
    manifest: TaskManifest,
    train_records: Sequence[LabelProbRecord],
    test_records: Sequence[LabelProbRecord],
    priors: PriorProfile,
    methods: Iterable[str] = ("penalty", "cc"),
    shot_counts: Sequence[int] = DEFAULT_SHOT_COUNTS,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    *,
    epochs: int = DEFAULT_EPOCHS,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    eps: float = EPSILON,
    strict: bool = False,
    f1_variant: str = "macro",
    positive_label: int = 1,
) -> EvalReport:
    """Run the seeds x shot-counts grid and summarize mean +- sample std.

    The zero-shot row (k = 0, calibrator at its prior initialization) is
    always included, alongside the uncalibrated baseline.
    """
    from .metrics import evaluate  # local import: metrics also imports core

    methods = tuple(methods)
    bad = [m for m in methods if m not in ("penalty", "cc")]
    if bad:
        raise CalibrationError(f"grid methods must be trainable (cc/penalty), got {bad}")

    eval_kwargs = dict(eps=eps, strict=strict, f1_variant=f1_variant,
                       positive_label=positive_label)
    baseline, _ = evaluate(test_records, CalibratorSpec(method="none"),
                           manifest, priors, **eval_kwargs)

    cells: list[GridCell] = []
    for method in methods:
        zero_spec = CalibratorSpec(method=method).materialized(
            priors, eps=eps, strict=strict)
        zero_value, _ = evaluate(test_records, zero_spec, manifest, priors,
                                 **eval_kwargs)
        cells.append(_summarize(method, 0, (), [zero_value]))

        for k in shot_counts:
            values = []
            for seed in seeds:
                cfg = TrainConfig(epochs=epochs, learning_rate=learning_rate,
                                  seed=seed, shots_per_class=k)
                shots = sample_shots(train_records, k, seed,
                                     num_labels=manifest.num_labels)
                spec = train_calibrator(method, shots, priors, cfg,
                                        eps=eps, strict=strict)
                value, _ = evaluate(test_records, spec, manifest, priors,
                                    **eval_kwargs)
                values.append(value)
            cells.append(_summarize(method, k, seeds, values))

    return EvalReport(task=manifest.task, metric=manifest.metric,
                      baseline=baseline, cells=tuple(cells))
