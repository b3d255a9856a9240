"""Accuracy evaluation: overall, per category, and across seeds."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .reader import ReaderParams, _forward, encode_dataset


@dataclass
class EvalReport:
    n: int
    correct: int
    accuracy: float
    per_category: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"n": self.n, "correct": self.correct, "accuracy": self.accuracy,
                "per_category": {k: dict(v) for k, v in sorted(self.per_category.items())}}


@dataclass
class MultiSeedResult:
    per_seed: list
    mean: float
    std: float


def predictions(params: ReaderParams, instances) -> np.ndarray:
    """Argmax option index per instance; ties break to the lowest index."""
    encoded = encode_dataset(instances, params.vocab, params.tokenizer)
    return np.array([int(np.argmax(_forward(enc, params))) for enc in encoded],
                    dtype=np.int64)


def accuracy(params: ReaderParams, instances) -> EvalReport:
    instances = list(instances)
    if not instances:
        raise ValueError("cannot evaluate an empty dataset")
    preds = predictions(params, instances)
    golds = np.array([inst.gold for inst in instances], dtype=np.int64)
    correct = int((preds == golds).sum())
    return EvalReport(n=len(instances), correct=correct,
                      accuracy=correct / len(instances))


def per_category(params: ReaderParams, instances) -> EvalReport:
    """Like accuracy, with per-category breakdown; untagged -> "uncategorized"."""
    instances = list(instances)
    report = accuracy(params, instances)
    preds = predictions(params, instances)
    buckets: dict = {}
    for inst, pred in zip(instances, preds):
        key = inst.category if inst.category else "uncategorized"
        n, correct = buckets.get(key, (0, 0))
        buckets[key] = (n + 1, correct + (1 if pred == inst.gold else 0))
    report.per_category = {key: {"n": n, "correct": c, "accuracy": c / n}
                           for key, (n, c) in buckets.items()}
    return report


def multi_seed(run, seeds) -> MultiSeedResult:
    """Runs ``run(seed) -> float`` per seed; sample std (ddof=1), 0 for one seed."""
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    values = [float(run(s)) for s in seeds]
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return MultiSeedResult(per_seed=values, mean=mean, std=std)
