"""Multiple-choice instance generation from knowledge triples.

An instance asks: given the scene with the nonverbal text deleted at its
anchor (the document) and the verbal message (the question), which of the
options is the nonverbal message that was removed? Distractors are drawn
from the same script and kind, so every option is plausible in register.

Sampling is reproducible and order-free: each triple gets its own RNG
stream derived from the corpus seed and the triple's identity, so
generating one triple or the whole corpus yields the same instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .extraction import KnowledgeTriple, TripleKind
from .util import derive_rng, stable_hash64, tokenize

GENERIC_MODES = ("empty_doc", "relation_doc")


@dataclass(frozen=True)
class McInstance:
    id: str
    document: str
    question: str
    options: tuple
    gold: int
    category: str | None = None
    source: dict = field(default_factory=dict)
    flags: tuple = ()


@dataclass(frozen=True)
class Skipped:
    reason: str
    detail: dict = field(default_factory=dict)


@dataclass
class GenerationResult:
    instances: list
    skipped: list

    def skip_reasons(self) -> dict:
        counts: dict = {}
        for s in self.skipped:
            counts[s.reason] = counts.get(s.reason, 0) + 1
        return counts


def instance_to_record(inst: McInstance) -> dict:
    return {"id": inst.id, "document": inst.document, "question": inst.question,
            "options": list(inst.options), "gold": inst.gold, "category": inst.category,
            "source": inst.source, "flags": list(inst.flags)}


def instance_from_record(rec: dict) -> McInstance:
    return McInstance(id=rec["id"], document=rec["document"], question=rec["question"],
                      options=tuple(rec["options"]), gold=int(rec["gold"]),
                      category=rec.get("category"), source=rec.get("source", {}),
                      flags=tuple(rec.get("flags", ())))


def build_pools(triples) -> dict:
    """Distractor pools: (script_id, kind) -> sorted tuple of unique nonverbal texts."""
    raw: dict = {}
    for t in triples:
        raw.setdefault((t.script_id, t.kind), set()).add(t.nonverbal)
    return {key: tuple(sorted(vals)) for key, vals in raw.items()}


def document_from_triple(triple: KnowledgeTriple) -> str:
    """Scene context with the nonverbal span deleted at its anchor."""
    lines = triple.context.split("\n")
    a = triple.anchor
    if triple.kind is TripleKind.OUTSIDE:
        del lines[a.line]
    else:
        line = lines[a.line]
        lines[a.line] = line[: a.start] + line[a.end :]
    return "\n".join(lines)


def triple_rng(triple: KnowledgeTriple, seed: int) -> np.random.Generator:
    a = triple.anchor
    return derive_rng(seed, triple.scene_id, triple.kind.value, f"{a.line}.{a.start}.{a.end}")


def _instance_id(triple: KnowledgeTriple) -> str:
    a = triple.anchor
    return f"{triple.scene_id}#{triple.kind.value}#{a.line}.{a.start}"


def triple_to_instance(triple: KnowledgeTriple, pools: dict, n_distractors: int,
                       rng: np.random.Generator):
    """-> McInstance, or Skipped when the pool cannot supply the distractors."""
    if n_distractors < 1:
        raise ValueError("n_distractors must be >= 1")
    pool = pools.get((triple.script_id, triple.kind), ())
    eligible = [x for x in pool if x != triple.nonverbal]
    if len(eligible) < n_distractors:
        return Skipped(reason="insufficient_distractors",
                       detail={"scene_id": triple.scene_id, "ktype": triple.kind.value,
                               "pool_size": len(eligible)})
    chosen = rng.choice(len(eligible), size=n_distractors, replace=False)
    pre = [triple.nonverbal] + [eligible[int(i)] for i in chosen]
    perm = rng.permutation(n_distractors + 1)
    options = tuple(pre[int(i)] for i in perm)
    gold = int(np.nonzero(perm == 0)[0][0])
    return McInstance(id=_instance_id(triple), document=document_from_triple(triple),
                      question=triple.verbal, options=options, gold=gold,
                      category=triple.kind.value,
                      source={"script_id": triple.script_id, "scene_id": triple.scene_id,
                              "ktype": triple.kind.value, "v_line": triple.verbal_line})


def generate_instances(triples, n_distractors: int = 5, seed: int = 0, *,
                       pools: dict | None = None, max_units: int | None = None,
                       unit: str = "tokens", tokenizer: str = "unicode_words") -> GenerationResult:
    """One instance (or one skip record) per triple, in triple order."""
    pools = pools if pools is not None else build_pools(triples)
    instances: list = []
    skipped: list = []
    for t in triples:
        result = triple_to_instance(t, pools, n_distractors, triple_rng(t, seed))
        if isinstance(result, Skipped):
            skipped.append(result)
            continue
        if max_units is not None:
            result = truncate_context(result, max_units, unit=unit, tokenizer=tokenizer)
        instances.append(result)
    return GenerationResult(instances=instances, skipped=skipped)


def _line_units(line: str, unit: str, tokenizer: str) -> int:
    if unit == "tokens":
        return len(tokenize(line, tokenizer))
    if unit == "chars":
        return len(line)
    raise ValueError(f"unknown truncation unit: {unit!r}")


def truncate_context(inst: McInstance, max_units: int, v_line: int | None = None, *,
                     unit: str = "tokens", tokenizer: str = "unicode_words") -> McInstance:
    """Shrink the document to at most max_units by repeatedly dropping the
    last line, or the first line while the verbal turn is the last one left.

    A single over-long line is truncated in place and the instance flagged
    ``hard_truncated``. ``v_line`` defaults to the line index recorded at
    generation time.
    """
    if max_units <= 0:
        raise ValueError("max_units must be positive")
    if not inst.document:
        return inst
    if v_line is None:
        v_line = inst.source.get("v_line")
    lines = inst.document.split("\n")
    counts = [_line_units(ln, unit, tokenizer) for ln in lines]
    changed = False
    hard = False
    while sum(counts) > max_units and len(lines) > 1:
        if v_line is not None and v_line == len(lines) - 1:
            lines.pop(0)
            counts.pop(0)
            v_line -= 1
        else:
            lines.pop()
            counts.pop()
        changed = True
    if sum(counts) > max_units:
        if unit == "tokens":
            lines[0] = " ".join(tokenize(lines[0], tokenizer)[:max_units])
        else:
            lines[0] = lines[0][:max_units]
        changed = True
        hard = True
    if not changed:
        return inst
    flags = inst.flags + (("hard_truncated",) if hard else ())
    return replace(inst, document="\n".join(lines), flags=flags)


def generic_triple_to_instance(subject: str, relation: str, obj: str, object_pool,
                               mode: str = "empty_doc", n_distractors: int = 5,
                               rng: np.random.Generator | None = None, seed: int = 0):
    """Instance from a (subject, relation, object) triple with no scene.

    The question is the subject; the document is empty or the relation name,
    per ``mode``. Distractors come from ``object_pool`` (object excluded).
    """
    if n_distractors < 1:
        raise ValueError("n_distractors must be >= 1")
    if mode not in GENERIC_MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {GENERIC_MODES}")
    if rng is None:
        rng = derive_rng(seed, "generic", subject, relation, obj, mode)
    eligible = sorted(set(object_pool) - {obj})
    if len(eligible) < n_distractors:
        return Skipped(reason="insufficient_distractors",
                       detail={"subject": subject, "relation": relation,
                               "pool_size": len(eligible)})
    chosen = rng.choice(len(eligible), size=n_distractors, replace=False)
    pre = [obj] + [eligible[int(i)] for i in chosen]
    perm = rng.permutation(n_distractors + 1)
    options = tuple(pre[int(i)] for i in perm)
    gold = int(np.nonzero(perm == 0)[0][0])
    doc = "" if mode == "empty_doc" else relation
    key = stable_hash64("|".join((subject, relation, obj, mode)))
    return McInstance(id=f"generic#{key:016x}", document=doc, question=subject,
                      options=options, gold=gold, category=relation,
                      source={"ktype": "generic", "relation": relation, "mode": mode})


def corpus_stats(items) -> dict:
    """Per-kind and total counts for triples or instances."""
    per_type = {kind.value: 0 for kind in TripleKind}
    total = 0
    for item in items:
        if isinstance(item, KnowledgeTriple):
            key = item.kind.value
        else:
            key = item.source.get("ktype", "unknown")
        per_type[key] = per_type.get(key, 0) + 1
        total += 1
    return {"per_type": per_type, "total": total}


class InstanceGenerator(BaseEstimator, TransformerMixin):
    """Stateless transformer: triples in, instances out (skips on ``skipped_``)."""

    def __init__(self, n_distractors=5, seed=0, max_units=None, unit="tokens",
                 tokenizer="unicode_words"):
        self.n_distractors = n_distractors
        self.seed = seed
        self.max_units = max_units
        self.unit = unit
        self.tokenizer = tokenizer

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> list:
        result = generate_instances(list(X), n_distractors=self.n_distractors,
                                    seed=self.seed, max_units=self.max_units,
                                    unit=self.unit, tokenizer=self.tokenizer)
        self.skipped_ = result.skipped
        return result.instances
