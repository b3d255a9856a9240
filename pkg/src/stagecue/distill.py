"""Two-stage training and multi-teacher label distillation.

Stage 1 fine-tunes on weakly-labeled data (optionally mixed with the
labeled set), stage 2 on the labeled set alone. In the teacher-student
variants one teacher is trained per weak set, then every training instance
gets a soft label

    s = weight * one_hot + (1 - weight) * teacher_probs

where labeled instances average all teachers' probabilities and each weak
instance uses its own set's teacher. Soft labels are computed once and
frozen for both student stages.

All runs in a pipeline share the seed, so teachers differ only through
their data: swapping two weak sets swaps the resulting teachers exactly.
The optimizer is plain minibatch gradient descent with a seeded per-epoch
shuffle; a non-finite loss aborts with diagnostics.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .instances import instance_from_record, instance_to_record
from .jsonl import SCHEMA_SOFT_LABELS, read_jsonl, write_jsonl
from .reader import (DEFAULT_DIM, ReaderParams, batch_gradients, build_vocab,
                     encode_dataset, hard_label, init_params, softmax, _forward)
from .util import config_hash, make_rng
from .validation import check_instances, check_label_vector

logger = logging.getLogger("stagecue.distill")

PRESETS = (
    "baseline",
    "single_weak_two_stage",
    "combined_two_stage",
    "separate_training",
    "teacher_student_hard",
    "teacher_student_soft",
    "no_context_ablation",
    "no_labeled_stage1_ablation",
)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, batch_index: int, loss: float):
        self.epoch = epoch
        self.batch_index = batch_index
        self.loss = loss
        super().__init__(f"non-finite training loss {loss!r} at epoch {epoch}, "
                         f"batch {batch_index}")


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    batch_size: int = 32
    epochs_stage1: int = 1
    epochs_stage2: int = 8
    hard_label_weight: float = 0.5    # weight on the one-hot part of a soft label
    stage2_labels: str = "soft"       # "soft" | "hard"
    include_labeled_stage1: bool = True
    teacher_epochs: int | None = None  # None: same as epochs_stage1
    teacher_clean_finetune: bool = False
    embed_dim: int = DEFAULT_DIM
    tokenizer: str = "unicode_words"
    init_scale: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs_stage1 < 0 or self.epochs_stage2 < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.teacher_epochs is not None and self.teacher_epochs < 0:
            raise ValueError("teacher_epochs must be >= 0")
        if not 0.0 <= self.hard_label_weight <= 1.0:
            raise ValueError("hard_label_weight must be in [0, 1]")
        if self.stage2_labels not in ("soft", "hard"):
            raise ValueError("stage2_labels must be 'soft' or 'hard'")

    def as_dict(self) -> dict:
        return {"learning_rate": self.learning_rate, "batch_size": self.batch_size,
                "epochs_stage1": self.epochs_stage1, "epochs_stage2": self.epochs_stage2,
                "hard_label_weight": self.hard_label_weight,
                "stage2_labels": self.stage2_labels,
                "include_labeled_stage1": self.include_labeled_stage1,
                "teacher_epochs": self.teacher_epochs,
                "teacher_clean_finetune": self.teacher_clean_finetune,
                "embed_dim": self.embed_dim, "tokenizer": self.tokenizer,
                "init_scale": self.init_scale, "seed": self.seed}


@dataclass
class DatasetBundle:
    labeled: list
    weak_sets: list = field(default_factory=list)   # one list of instances per set
    dev: list = field(default_factory=list)
    test: list = field(default_factory=list)

    @property
    def n_teachers(self) -> int:
        return len(self.weak_sets)

    def all_train(self) -> list:
        out = list(self.labeled)
        for wset in self.weak_sets:
            out.extend(wset)
        return out

    def validate(self) -> None:
        check_instances(self.all_train() + list(self.dev) + list(self.test))


def strip_weak_documents(bundle: DatasetBundle) -> DatasetBundle:
    """Ablation bundle: every weak instance loses its document."""
    stripped = [[replace(inst, document="") for inst in wset]
                for wset in bundle.weak_sets]
    return DatasetBundle(labeled=bundle.labeled, weak_sets=stripped,
                         dev=bundle.dev, test=bundle.test)


def _sgd(encoded, labels, params: ReaderParams, cfg: TrainConfig, epochs: int) -> ReaderParams:
    """Seeded-shuffle minibatch gradient descent; never mutates ``params``."""
    out = params.copy()
    if epochs == 0 or not encoded:
        return out
    rng = make_rng(cfg.seed)
    n = len(encoded)
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            sel = order[start : start + cfg.batch_size]
            batch = [encoded[i] for i in sel]
            batch_labels = [labels[i] for i in sel]
            loss, grads = batch_gradients(batch, batch_labels, out)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, start // cfg.batch_size, loss)
            out.embeddings -= cfg.learning_rate * grads.embeddings
            out.bilinear -= cfg.learning_rate * grads.bilinear
            out.bias -= cfg.learning_rate * grads.bias
            epoch_loss += loss * len(batch)
        logger.info("epoch %d: mean loss %.6f over %d instances",
                    epoch, epoch_loss / n, n)
    return out


def train_hard(data, params: ReaderParams, cfg: TrainConfig, epochs: int) -> ReaderParams:
    """Cross-entropy training against each instance's own gold option."""
    data = list(data)
    encoded = encode_dataset(data, params.vocab, params.tokenizer)
    labels = [hard_label(len(inst.options), inst.gold) for inst in data]
    return _sgd(encoded, labels, params, cfg, epochs)


def train_soft(data, label_map: dict, params: ReaderParams, cfg: TrainConfig,
               epochs: int) -> ReaderParams:
    """Cross-entropy training against per-instance soft label vectors."""
    data = list(data)
    labels = []
    for inst in data:
        if inst.id not in label_map:
            raise ValueError(f"no soft label for instance {inst.id!r}")
        labels.append(check_label_vector(label_map[inst.id], len(inst.options)))
    encoded = encode_dataset(data, params.vocab, params.tokenizer)
    return _sgd(encoded, labels, params, cfg, epochs)


def _shared_params(bundle: DatasetBundle, cfg: TrainConfig) -> ReaderParams:
    """One vocabulary and one seeded init shared by every run in a pipeline."""
    vocab = build_vocab(bundle.all_train(), cfg.tokenizer)
    return init_params(vocab, dim=cfg.embed_dim, seed=cfg.seed, scale=cfg.init_scale,
                       tokenizer=cfg.tokenizer)


def train_teachers(bundle: DatasetBundle, cfg: TrainConfig,
                   params: ReaderParams | None = None) -> list:
    """One teacher per weak set, all from the same init and seed.

    Each teacher minimizes the hard loss over its labeled+weak union
    (``teacher_epochs``, defaulting to the stage-1 epoch count), optionally
    followed by a clean fine-tune on the labeled set alone.
    """
    if not bundle.weak_sets:
        raise ValueError("bundle has no weak sets to train teachers on")
    if params is None:
        params = _shared_params(bundle, cfg)
    epochs = cfg.teacher_epochs if cfg.teacher_epochs is not None else cfg.epochs_stage1
    teachers = []
    for wset in bundle.weak_sets:
        data = (list(bundle.labeled) + list(wset)) if cfg.include_labeled_stage1 \
            else list(wset)
        teacher = train_hard(data, params, cfg, epochs)
        if cfg.teacher_clean_finetune:
            teacher = train_hard(bundle.labeled, teacher, cfg, cfg.epochs_stage2)
        teachers.append(teacher)
    return teachers


def mix_labels(hard: np.ndarray, teacher_probs: np.ndarray, weight: float) -> np.ndarray:
    """weight * hard + (1 - weight) * teacher_probs (rows averaged if 2-D)."""
    if not 0.0 <= weight <= 1.0:
        raise ValueError("weight must be in [0, 1]")
    probs = np.asarray(teacher_probs, dtype=float)
    if probs.ndim == 2:
        probs = probs.sum(axis=0) / probs.shape[0]
    return weight * np.asarray(hard, dtype=float) + (1.0 - weight) * probs


def soft_labels(bundle: DatasetBundle, teachers, weight: float) -> dict:
    """Frozen soft labels for every training instance.

    Labeled instances mix the one-hot with the mean of all teachers'
    probabilities; each weak instance uses only its own set's teacher.
    """
    teachers = list(teachers)
    if not teachers:
        raise ValueError("need at least one teacher")
    if bundle.weak_sets and len(teachers) != len(bundle.weak_sets):
        raise ValueError(f"{len(teachers)} teachers for {len(bundle.weak_sets)} weak sets")
    vocab = teachers[0].vocab
    tokenizer = teachers[0].tokenizer
    out: dict = {}
    encoded = encode_dataset(bundle.labeled, vocab, tokenizer)
    for inst, enc in zip(bundle.labeled, encoded):
        probs = np.array([softmax(_forward(enc, t)) for t in teachers])
        out[inst.id] = mix_labels(hard_label(len(inst.options), inst.gold), probs, weight)
    for wset, teacher in zip(bundle.weak_sets, teachers):
        for inst, enc in zip(wset, encode_dataset(wset, vocab, tokenizer)):
            probs = softmax(_forward(enc, teacher))
            out[inst.id] = mix_labels(hard_label(len(inst.options), inst.gold),
                                      probs, weight)
    return out


def _stage1_data(bundle: DatasetBundle, cfg: TrainConfig) -> list:
    data = list(bundle.labeled) if cfg.include_labeled_stage1 else []
    for wset in bundle.weak_sets:
        data.extend(wset)
    return data


def train_student(bundle: DatasetBundle, label_map: dict, cfg: TrainConfig,
                  params: ReaderParams | None = None) -> tuple:
    """-> (final params, stage-1 checkpoint). Stage 1 trains on soft labels
    over the stage-1 mix; stage 2 on the labeled set with soft or hard labels."""
    if params is None:
        params = _shared_params(bundle, cfg)
    stage1 = train_soft(_stage1_data(bundle, cfg), label_map, params, cfg,
                        cfg.epochs_stage1)
    if cfg.stage2_labels == "soft":
        final = train_soft(bundle.labeled, label_map, stage1, cfg, cfg.epochs_stage2)
    else:
        final = train_hard(bundle.labeled, stage1, cfg, cfg.epochs_stage2)
    return final, stage1


def save_soft_labels(path, label_map: dict, *, config_hash_value: str | None = None,
                     seed: int | None = None) -> None:
    records = [{"instance_id": key, "values": [float(v) for v in label_map[key]]}
               for key in sorted(label_map)]
    write_jsonl(path, records, SCHEMA_SOFT_LABELS, config_hash=config_hash_value,
                seed=seed)


def load_soft_labels(path) -> dict:
    _, records = read_jsonl(path, expect_schema=SCHEMA_SOFT_LABELS)
    return {rec["instance_id"]: np.array(rec["values"], dtype=float) for rec in records}


@dataclass
class PipelineReport:
    preset: str
    seeds: list
    per_seed: dict                 # {"dev": [...], "test": [...]}
    mean: dict
    std: dict
    stage1: dict | None
    sizes: dict
    config_hash: str

    def as_dict(self) -> dict:
        return {"schema": "pipeline-report/v1", "preset": self.preset,
                "seeds": self.seeds, "per_seed": self.per_seed, "mean": self.mean,
                "std": self.std, "stage1": self.stage1, "sizes": self.sizes,
                "config_hash": self.config_hash}

    def format_table(self) -> str:
        rows = []
        if self.stage1 is not None:
            rows.append(("stage1", self.stage1["mean"], self.stage1["std"]))
        rows.append(("final", self.mean, self.std))
        lines = [f"preset: {self.preset}  (seeds: {', '.join(str(s) for s in self.seeds)})",
                 f"{'':10s} {'dev':>18s} {'test':>18s}"]
        for name, mean, std in rows:
            lines.append(f"{name:10s} {mean['dev']:8.4f} +/- {std['dev']:6.4f} "
                         f"{mean['test']:8.4f} +/- {std['test']:6.4f}")
        return "\n".join(lines)


def _eval_pair(params: ReaderParams, bundle: DatasetBundle) -> dict:
    from .evaluate import accuracy

    return {"dev": accuracy(params, bundle.dev).accuracy,
            "test": accuracy(params, bundle.test).accuracy}


def _run_preset(preset: str, bundle: DatasetBundle, cfg: TrainConfig,
                weak_index: int) -> dict:
    params = _shared_params(bundle, cfg)
    stage1_params = None
    if preset == "baseline":
        final = train_hard(bundle.labeled, params, cfg, cfg.epochs_stage2)
    elif preset == "single_weak_two_stage":
        if not 0 <= weak_index < len(bundle.weak_sets):
            raise ValueError(f"weak_index {weak_index} out of range for "
                             f"{len(bundle.weak_sets)} weak sets")
        sub = DatasetBundle(labeled=bundle.labeled,
                            weak_sets=[bundle.weak_sets[weak_index]],
                            dev=bundle.dev, test=bundle.test)
        stage1_params = train_hard(_stage1_data(sub, cfg), params, cfg, cfg.epochs_stage1)
        final = train_hard(bundle.labeled, stage1_params, cfg, cfg.epochs_stage2)
    elif preset == "combined_two_stage":
        stage1_params = train_hard(_stage1_data(bundle, cfg), params, cfg,
                                   cfg.epochs_stage1)
        final = train_hard(bundle.labeled, stage1_params, cfg, cfg.epochs_stage2)
    elif preset == "separate_training":
        weak_only = replace(cfg, include_labeled_stage1=False)
        stage1_params = train_hard(_stage1_data(bundle, weak_only), params, cfg,
                                   cfg.epochs_stage1)
        final = train_hard(bundle.labeled, stage1_params, cfg, cfg.epochs_stage2)
    elif preset in ("teacher_student_hard", "teacher_student_soft",
                    "no_context_ablation", "no_labeled_stage1_ablation"):
        run_bundle = bundle
        run_cfg = cfg
        if preset == "teacher_student_hard":
            run_cfg = replace(cfg, stage2_labels="hard")
        else:
            run_cfg = replace(cfg, stage2_labels="soft")
        if preset == "no_context_ablation":
            run_bundle = strip_weak_documents(bundle)
        if preset == "no_labeled_stage1_ablation":
            run_cfg = replace(run_cfg, include_labeled_stage1=False)
        teachers = train_teachers(run_bundle, run_cfg, params)
        labels = soft_labels(run_bundle, teachers, run_cfg.hard_label_weight)
        final, stage1_params = train_student(run_bundle, labels, run_cfg, params)
    else:
        raise ValueError(f"unknown preset {preset!r}; expected one of {PRESETS}")
    result = {"final": _eval_pair(final, bundle)}
    result["stage1"] = _eval_pair(stage1_params, bundle) if stage1_params is not None else None
    return result


def run_pipeline(preset: str, bundle: DatasetBundle, cfg: TrainConfig, *,
                 n_seeds: int = 5, seeds=None, weak_index: int = 0) -> PipelineReport:
    """Executes a preset once per seed and aggregates dev/test accuracies."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; expected one of {PRESETS}")
    bundle.validate()
    seeds = list(seeds) if seeds is not None else [cfg.seed + i for i in range(n_seeds)]
    if not seeds:
        raise ValueError("need at least one seed")
    per_seed: dict = {"dev": [], "test": []}
    stage1_per_seed: dict = {"dev": [], "test": []}
    has_stage1 = False
    for seed in seeds:
        outcome = _run_preset(preset, bundle, replace(cfg, seed=seed), weak_index)
        per_seed["dev"].append(outcome["final"]["dev"])
        per_seed["test"].append(outcome["final"]["test"])
        if outcome["stage1"] is not None:
            has_stage1 = True
            stage1_per_seed["dev"].append(outcome["stage1"]["dev"])
            stage1_per_seed["test"].append(outcome["stage1"]["test"])

    def _agg(values: dict) -> tuple:
        mean = {k: float(np.mean(v)) for k, v in values.items()}
        std = {k: (float(np.std(v, ddof=1)) if len(v) > 1 else 0.0)
               for k, v in values.items()}
        return mean, std

    mean, std = _agg(per_seed)
    stage1 = None
    if has_stage1:
        s1_mean, s1_std = _agg(stage1_per_seed)
        stage1 = {"per_seed": stage1_per_seed, "mean": s1_mean, "std": s1_std}
    sizes = {"labeled": len(bundle.labeled),
             "weak": [len(w) for w in bundle.weak_sets],
             "dev": len(bundle.dev), "test": len(bundle.test)}
    chash = config_hash({"preset": preset, "train": cfg.as_dict(), "seeds": seeds,
                         "weak_index": weak_index})
    return PipelineReport(preset=preset, seeds=seeds, per_seed=per_seed, mean=mean,
                          std=std, stage1=stage1, sizes=sizes, config_hash=chash)


def load_instances(path) -> list:
    from .jsonl import SCHEMA_INSTANCES

    _, records = read_jsonl(path, expect_schema=SCHEMA_INSTANCES)
    return [instance_from_record(r) for r in records]


def save_instances(path, instances, *, config_hash_value: str | None = None,
                   seed: int | None = None) -> None:
    from .jsonl import SCHEMA_INSTANCES

    write_jsonl(path, [instance_to_record(i) for i in instances], SCHEMA_INSTANCES,
                config_hash=config_hash_value, seed=seed)
