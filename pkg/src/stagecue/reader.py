"""A small differentiable multiple-choice reader.

Texts are encoded as the mean of their token embeddings (row 0 of the
embedding table is reserved for unknown tokens; empty texts encode to the
zero vector). An option is scored against the document through a bilinear
form:

    score_k = enc(document)^T  W  enc(question + option_k)  +  bias

Option probabilities are a max-subtracted softmax over the scores, and the
training loss is cross-entropy against a hard or soft label vector. All
arithmetic is float64 and all gradients are written out by hand; a central
finite-difference checker validates them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .jsonl import SCHEMA_CHECKPOINT
from .util import make_rng, tokenize

DEFAULT_DIM = 64


class ParameterFault(RuntimeError):
    """Scores or parameters are not finite; the message locates the culprit."""


@dataclass
class ReaderParams:
    vocab: dict                 # token -> row index (>= 1); row 0 is unknown
    embeddings: np.ndarray      # (len(vocab) + 1, dim) float64
    bilinear: np.ndarray        # (dim, dim) float64
    bias: float
    tokenizer: str = "unicode_words"

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1])

    def copy(self) -> "ReaderParams":
        return ReaderParams(vocab=self.vocab, embeddings=self.embeddings.copy(),
                            bilinear=self.bilinear.copy(), bias=float(self.bias),
                            tokenizer=self.tokenizer)


@dataclass
class Gradients:
    embeddings: np.ndarray
    bilinear: np.ndarray
    bias: float


@dataclass(frozen=True)
class EncodedInstance:
    instance_id: str
    doc: np.ndarray             # token row indices
    options: tuple              # one index array per option (question + option)
    gold: int


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    worst: dict                 # {"array", "index", "analytic", "numeric"}
    n_checked: int
    eps: float
    tol: float

    def __str__(self) -> str:
        w = self.worst
        return (f"gradient check {'PASSED' if self.passed else 'FAILED'}: "
                f"max rel err {self.max_rel_error:.3e} at {w.get('array')}[{w.get('index')}] "
                f"(analytic {w.get('analytic'):.6e}, numeric {w.get('numeric'):.6e}; "
                f"{self.n_checked} coords, eps {self.eps:g}, tol {self.tol:g})")


def build_vocab(instances, tokenizer: str = "unicode_words") -> dict:
    """Sorted token -> index (from 1) over documents, questions, and options."""
    seen = set()
    for inst in instances:
        seen.update(tokenize(inst.document, tokenizer))
        seen.update(tokenize(inst.question, tokenizer))
        for opt in inst.options:
            seen.update(tokenize(opt, tokenizer))
    return {tok: i + 1 for i, tok in enumerate(sorted(seen))}


def init_params(vocab: dict, dim: int = DEFAULT_DIM, seed: int = 0, scale: float = 0.05,
                tokenizer: str = "unicode_words") -> ReaderParams:
    rng = make_rng(seed)
    emb = rng.uniform(-scale, scale, size=(len(vocab) + 1, dim))
    bil = rng.uniform(-scale, scale, size=(dim, dim))
    return ReaderParams(vocab=vocab, embeddings=emb, bilinear=bil, bias=0.0,
                        tokenizer=tokenizer)


def token_indices(tokens, vocab: dict) -> np.ndarray:
    return np.array([vocab.get(t, 0) for t in tokens], dtype=np.int64)


def _mean_rows(emb: np.ndarray, idx: np.ndarray) -> np.ndarray:
    if idx.size == 0:
        return np.zeros(emb.shape[1])
    return emb[idx].sum(axis=0) / idx.size


def encode(tokens, params: ReaderParams) -> np.ndarray:
    """Mean embedding of a token sequence; zeros for an empty sequence."""
    return _mean_rows(params.embeddings, token_indices(tokens, params.vocab))


def encode_instance(inst, vocab: dict, tokenizer: str = "unicode_words") -> EncodedInstance:
    doc = token_indices(tokenize(inst.document, tokenizer), vocab)
    q = tokenize(inst.question, tokenizer)
    options = tuple(token_indices(q + tokenize(opt, tokenizer), vocab)
                    for opt in inst.options)
    return EncodedInstance(instance_id=inst.id, doc=doc, options=options, gold=inst.gold)


def encode_dataset(instances, vocab: dict, tokenizer: str = "unicode_words") -> list:
    return [encode_instance(inst, vocab, tokenizer) for inst in instances]


def _locate_nonfinite(params: ReaderParams) -> str | None:
    for name in ("embeddings", "bilinear"):
        arr = getattr(params, name)
        bad = np.nonzero(~np.isfinite(arr.ravel()))[0]
        if bad.size:
            return f"{name} flat index {int(bad[0])}"
    if not np.isfinite(params.bias):
        return "bias"
    return None


def _forward(enc: EncodedInstance, params: ReaderParams) -> np.ndarray:
    emb = params.embeddings
    u = _mean_rows(emb, enc.doc)
    left = u @ params.bilinear
    scores = np.array([left @ _mean_rows(emb, oi) + params.bias for oi in enc.options])
    if not np.isfinite(scores).all():
        where = _locate_nonfinite(params)
        detail = f"first non-finite parameter: {where}" if where else \
            "parameters finite but scores overflow"
        raise ParameterFault(f"non-finite option scores for {enc.instance_id!r}; {detail}")
    return scores


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max()
    e = np.exp(z)
    return e / e.sum()


def option_scores(inst, params: ReaderParams) -> np.ndarray:
    return _forward(encode_instance(inst, params.vocab, params.tokenizer), params)


def option_probs(inst, params: ReaderParams) -> np.ndarray:
    return softmax(option_scores(inst, params))


def hard_label(n_options: int, gold: int) -> np.ndarray:
    if not 0 <= gold < n_options:
        raise ValueError(f"gold index {gold} out of range for {n_options} options")
    lab = np.zeros(n_options)
    lab[gold] = 1.0
    return lab


def loss_and_score_gradient(scores: np.ndarray, labels: np.ndarray) -> tuple:
    """Cross-entropy against a label vector and its exact score gradient p - s.

    Zero-label entries contribute exactly zero loss, so the one-hot case
    agrees bit for bit with -log p[gold].
    """
    p = softmax(scores)
    mask = labels > 0
    loss = float(-(labels[mask] * np.log(p[mask])).sum()) if mask.any() else 0.0
    return loss, p - labels


def loss_hard(inst, params: ReaderParams) -> float:
    p = option_probs(inst, params)
    return float(-np.log(p[inst.gold]))


def loss_soft(inst, labels, params: ReaderParams) -> float:
    labels = np.asarray(labels, dtype=float)
    if labels.shape != (len(inst.options),):
        raise ValueError(f"label vector shape {labels.shape} does not match "
                         f"{len(inst.options)} options")
    scores = option_scores(inst, params)
    loss, _ = loss_and_score_gradient(scores, labels)
    return loss


def batch_loss(encoded_batch, labels, params: ReaderParams) -> float:
    total = 0.0
    for enc, lab in zip(encoded_batch, labels):
        loss, _ = loss_and_score_gradient(_forward(enc, params), lab)
        total += loss
    return total / len(encoded_batch)


def batch_gradients(encoded_batch, labels, params: ReaderParams) -> tuple:
    """(mean loss, Gradients) of the mean cross-entropy over the batch.

    Derivation: with dscore = p - s, the bilinear gradient is
    outer(u, sum_k dscore_k w_k), the document encoding receives W m, each
    option encoding dscore_k W^T u, and mean-pooling distributes a vector
    g to each contributing embedding row as g / token_count.
    """
    if not encoded_batch:
        raise ValueError("empty batch")
    emb, bil = params.embeddings, params.bilinear
    d_emb = np.zeros_like(emb)
    d_bil = np.zeros_like(bil)
    d_bias = 0.0
    total = 0.0
    for enc, lab in zip(encoded_batch, labels):
        u = _mean_rows(emb, enc.doc)
        ws = [_mean_rows(emb, oi) for oi in enc.options]
        left = u @ bil
        scores = np.array([left @ w + params.bias for w in ws])
        if not np.isfinite(scores).all():
            where = _locate_nonfinite(params)
            raise ParameterFault(f"non-finite option scores for {enc.instance_id!r}; "
                                 f"{where or 'scores overflow'}")
        loss, dscore = loss_and_score_gradient(scores, lab)
        total += loss
        m = np.zeros(params.dim)
        for k, w in enumerate(ws):
            m += dscore[k] * w
        d_bil += np.outer(u, m)
        if enc.doc.size:
            np.add.at(d_emb, enc.doc, (bil @ m) / enc.doc.size)
        bt_u = bil.T @ u
        for k, oi in enumerate(enc.options):
            if oi.size:
                np.add.at(d_emb, oi, (dscore[k] / oi.size) * bt_u)
        d_bias += float(dscore.sum())
    inv = 1.0 / len(encoded_batch)
    return total * inv, Gradients(embeddings=d_emb * inv, bilinear=d_bil * inv,
                                  bias=d_bias * inv)


def _perturbed_loss(encoded_batch, labels, params: ReaderParams, array: str,
                    flat_index: int, delta: float) -> float:
    probe = params.copy()
    if array == "bias":
        probe.bias += delta
    else:
        getattr(probe, array).ravel()[flat_index] += delta
    return batch_loss(encoded_batch, labels, probe)


def check_gradients(params: ReaderParams, batch, labels=None, *, eps: float = 1e-5,
                    tol: float = 1e-4, samples_per_array: int = 25, seed: int = 0,
                    gradients: Gradients | None = None) -> GradCheckReport:
    """Central finite differences against the analytic gradient.

    Relative error uses |a - n| / max(|a| + |n|, 1e-6); the floor keeps
    coordinates whose true gradient is ~0 (the softmax-inert bias) from
    amplifying pure roundoff, while real errors exceed it by orders of
    magnitude. ``gradients`` may be supplied to audit an externally
    computed (possibly wrong) gradient.
    """
    encoded = [encode_instance(i, params.vocab, params.tokenizer) for i in batch]
    if labels is None:
        labels = [hard_label(len(i.options), i.gold) for i in batch]
    if gradients is None:
        _, gradients = batch_gradients(encoded, labels, params)
    rng = make_rng(seed)
    coords: list = []
    for name in ("embeddings", "bilinear"):
        size = getattr(params, name).size
        take = min(samples_per_array, size)
        for flat in rng.choice(size, size=take, replace=False):
            coords.append((name, int(flat)))
    coords.append(("bias", 0))
    max_rel = 0.0
    worst = {"array": "bias", "index": 0, "analytic": 0.0, "numeric": 0.0}
    for name, flat in coords:
        up = _perturbed_loss(encoded, labels, params, name, flat, +eps)
        down = _perturbed_loss(encoded, labels, params, name, flat, -eps)
        numeric = (up - down) / (2.0 * eps)
        if name == "bias":
            analytic = gradients.bias
        else:
            analytic = float(getattr(gradients, name).ravel()[flat])
        rel = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-6)
        if rel > max_rel:
            max_rel = rel
            worst = {"array": name, "index": flat, "analytic": analytic,
                     "numeric": numeric}
    return GradCheckReport(passed=bool(max_rel < tol), max_rel_error=max_rel,
                           worst=worst, n_checked=len(coords), eps=eps, tol=tol)


def save_params(params: ReaderParams, path, *, config_hash: str | None = None) -> None:
    inverse = sorted(params.vocab, key=params.vocab.get)
    payload = {
        "schema": SCHEMA_CHECKPOINT,
        "config_hash": config_hash,
        "tokenizer": params.tokenizer,
        "dim": params.dim,
        "vocab": inverse,
        "embeddings": params.embeddings.tolist(),
        "bilinear": params.bilinear.tolist(),
        "bias": float(params.bias),
    }
    Path(path).write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")


def load_params(path) -> ReaderParams:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("schema") != SCHEMA_CHECKPOINT:
        raise ValueError(f"{path}: not a reader checkpoint "
                         f"(schema {payload.get('schema')!r})")
    vocab = {tok: i + 1 for i, tok in enumerate(payload["vocab"])}
    params = ReaderParams(vocab=vocab,
                          embeddings=np.array(payload["embeddings"], dtype=float),
                          bilinear=np.array(payload["bilinear"], dtype=float),
                          bias=float(payload["bias"]),
                          tokenizer=payload.get("tokenizer", "unicode_words"))
    where = _locate_nonfinite(params)
    if where is not None:
        raise ValueError(f"{path}: non-finite parameter ({where})")
    if params.embeddings.shape[0] != len(vocab) + 1:
        raise ValueError(f"{path}: embedding rows {params.embeddings.shape[0]} do not "
                         f"match vocab size {len(vocab)} + 1")
    return params


class ChoiceReader(BaseEstimator, ClassifierMixin):
    """Multiple-choice classifier over McInstance lists.

    fit(X) builds the vocabulary from X, initializes parameters from the
    seed, and trains with hard labels for ``epochs`` epochs. Labels live on
    the instances themselves, so y is accepted but ignored.
    """

    def __init__(self, embed_dim=DEFAULT_DIM, learning_rate=0.1, batch_size=32,
                 epochs=8, tokenizer="unicode_words", init_scale=0.05, seed=0):
        self.embed_dim = embed_dim
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.tokenizer = tokenizer
        self.init_scale = init_scale
        self.seed = seed

    def fit(self, X, y=None):
        from .distill import TrainConfig, train_hard
        from .validation import check_instances

        X = list(X)
        check_instances(X)
        cfg = TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size,
                          embed_dim=self.embed_dim, tokenizer=self.tokenizer,
                          init_scale=self.init_scale, seed=self.seed)
        vocab = build_vocab(X, self.tokenizer)
        start = init_params(vocab, dim=self.embed_dim, seed=self.seed,
                            scale=self.init_scale, tokenizer=self.tokenizer)
        self.params_ = train_hard(X, start, cfg, epochs=self.epochs)
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("this ChoiceReader instance is not fitted yet; "
                                 "call fit before predicting")

    def predict_proba(self, X) -> list:
        self._check_fitted()
        return [option_probs(inst, self.params_) for inst in X]

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        return np.array([int(np.argmax(option_scores(inst, self.params_))) for inst in X],
                        dtype=np.int64)

    def score(self, X, y=None) -> float:
        X = list(X)
        preds = self.predict(X)
        golds = np.array([inst.gold for inst in X], dtype=np.int64)
        return float((preds == golds).mean())
