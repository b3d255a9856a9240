"""Synthetic screenplay fixtures with a known triple oracle.

The generator plants one triple of each kind per scene (turns permitting)
using closed token namespaces, so the extractor's output on a synthetic
corpus can be compared against the planted oracle exactly:

  * speaker names are single invented tokens, so no span accidentally
    extends a known name;
  * parentheticals, noisy speaker suffixes, and action lines appear only
    where planted;
  * nonverbal texts come from per-kind category inventories
    (gestureNN / mannerNN / toneNN / action lines with actNN), none of
    which the stoplist matches.

Each planted category has a paired cue token (bcueNN / ncueNN / icueNN /
ocueNN) injected into the verbal turn with probability ``signal_strength``.
The cue survives into both the question and the document of the generated
instance, so a reader can learn the cue-category association; with
signal_strength 0 the instances carry no signal.

Also ships the hand-checked golden scene used by the extraction tests.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from .extraction import KnowledgeTriple, TripleKind
from .screenplay import ParserConfig, RawScript, Scene, parse_scene
from .util import derive_rng

_NAMES = ("Arno", "Bexa", "Cade", "Dian", "Eryn", "Falk", "Gena", "Hale",
          "Iris", "Jody", "Kemp", "Lyle", "Mira", "Nico", "Opal", "Pell",
          "Quin", "Runa", "Seth", "Tove", "Ursa", "Vern", "Wynn", "Yara")

_CUE_PREFIX = {
    TripleKind.BEGIN_CLEAN: "bcue",
    TripleKind.BEGIN_NOISY: "ncue",
    TripleKind.INSIDE: "icue",
    TripleKind.OUTSIDE: "ocue",
}

_CATEGORY_RE = re.compile(r"(\d+)")

GOLDEN_SCENE_TEXT = "\n".join([
    "Interior. Runaway office. Day.",
    "Andy: I tried to ask her, but...",
    "Emily: You never ask Miranda. Anything. (sighs) All right, I’ll take care "
    "of the other stuff. You go to Calvin Klein.",
    "Andy: Me?",
    "Emily: I’m sorry. Do you have a prior commitment? Is there some hideous "
    "pants convention?",
    "Andy: So I just, what, go down to the Calvin Klein store and ask them...",
    "Emily rolls her eyes so hard they almost eject from her head.",
    "Emily: You’re not going to the store.",
    "Andy: Of course not. I’m going...(thinking)...to his house.",
    "Emily (oh god): You are catching on quickly. We always send assistants to a "
    "designer’s home on their very first day. You’re going to his showroom. "
    "I’ll give you the address.",
    "Andy: Sorry. Got it. What’s the nearest subway stop?",
    "Emily: Good God. You do not. Under any circumstances. Take public transportation.",
    "Andy: I don’t?",
])


def golden_scene(cfg: ParserConfig | None = None) -> Scene:
    """The hand-checked sample scene (1 heading, 11 turns, 1 action line)."""
    return parse_scene("golden", 0, GOLDEN_SCENE_TEXT, cfg or ParserConfig())


@dataclass(frozen=True)
class FixtureSpec:
    n_scripts: int = 20
    scenes_per_script: int = 6
    turns_per_scene: int = 6
    signal_strength: object = 1.0          # float, or {kind value: float}
    vocab_size: int = 80
    seed: int = 0
    categories_per_kind: int = 12
    utterance_tokens: tuple = (4, 8)       # inclusive filler-count range per turn
    cue_repeats: int = 1

    def __post_init__(self):
        for name in ("n_scripts", "scenes_per_script", "turns_per_scene", "vocab_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.categories_per_kind < 2:
            raise ValueError("categories_per_kind must be >= 2")
        lo, hi = self.utterance_tokens
        if lo < 1 or hi < lo:
            raise ValueError("utterance_tokens must be (lo, hi) with 1 <= lo <= hi")
        if self.cue_repeats < 1:
            raise ValueError("cue_repeats must be >= 1")
        strengths = (self.signal_strength.values()
                     if isinstance(self.signal_strength, dict)
                     else [self.signal_strength])
        for s in strengths:
            if not 0.0 <= float(s) <= 1.0:
                raise ValueError("signal_strength values must be in [0, 1]")

    def signal_for(self, kind: TripleKind) -> float:
        if isinstance(self.signal_strength, dict):
            return float(self.signal_strength.get(kind.value, 1.0))
        return float(self.signal_strength)

    def as_dict(self) -> dict:
        signal = (dict(sorted(self.signal_strength.items()))
                  if isinstance(self.signal_strength, dict)
                  else float(self.signal_strength))
        return {"n_scripts": self.n_scripts, "scenes_per_script": self.scenes_per_script,
                "turns_per_scene": self.turns_per_scene, "signal_strength": signal,
                "vocab_size": self.vocab_size, "seed": self.seed,
                "categories_per_kind": self.categories_per_kind,
                "utterance_tokens": list(self.utterance_tokens),
                "cue_repeats": self.cue_repeats}


@dataclass
class SyntheticCorpus:
    spec: FixtureSpec
    scripts: list
    oracle: list                    # planted-triple records (dicts)


def _filler(i: int) -> str:
    return f"w{i:03d}"


def nonverbal_text(kind: TripleKind, category: int) -> str:
    if kind is TripleKind.BEGIN_CLEAN:
        return f"gesture{category:02d}"
    if kind is TripleKind.BEGIN_NOISY:
        return f"manner{category:02d}"
    if kind is TripleKind.INSIDE:
        return f"tone{category:02d}"
    return f"they act{category:02d} together"


def cue_token(kind: TripleKind, category: int) -> str:
    return f"{_CUE_PREFIX[kind]}{category:02d}"


def oracle_key(rec: dict) -> tuple:
    return (rec["script_id"], rec["scene_id"], rec["ktype"], rec["line"],
            rec["nonverbal"], rec["verbal"])


def triple_key(t: KnowledgeTriple) -> tuple:
    return (t.script_id, t.scene_id, t.kind.value, t.anchor.line, t.nonverbal, t.verbal)


def _synth_scene(spec: FixtureSpec, script_id: str, ordinal: int) -> tuple:
    """-> (scene text, planted oracle records)."""
    rng = derive_rng(spec.seed, "scene", script_id, str(ordinal))
    scene_id = f"{script_id}/{ordinal:04d}"
    n_turns = spec.turns_per_scene
    cast_idx = rng.choice(len(_NAMES), size=min(3, len(_NAMES)), replace=False)
    cast = [_NAMES[int(i)] for i in cast_idx]
    speakers = [cast[int(rng.integers(len(cast)))] for _ in range(n_turns)]
    lo, hi = spec.utterance_tokens
    utterances = [[_filler(int(rng.integers(spec.vocab_size)))
                   for _ in range(int(rng.integers(lo, hi + 1)))]
                  for _ in range(n_turns)]

    order = [int(i) for i in rng.permutation(n_turns)]
    inside_idx = order[0]
    bc_idx = order[1] if n_turns >= 2 else None
    bn_idx = order[2] if n_turns >= 3 else None
    rest = order[3:]
    o_idx = rest[0] if rest else inside_idx

    def plan(kind: TripleKind, turn: int) -> tuple:
        category = int(rng.integers(spec.categories_per_kind))
        cued = bool(rng.random() < spec.signal_for(kind))
        if cued:
            tokens = utterances[turn]
            for _ in range(spec.cue_repeats):
                tokens.insert(int(rng.integers(len(tokens) + 1)),
                              cue_token(kind, category))
        return category, cued

    inside_cat, inside_cued = plan(TripleKind.INSIDE, inside_idx)
    bc_cat = bc_cued = None
    if bc_idx is not None:
        bc_cat, bc_cued = plan(TripleKind.BEGIN_CLEAN, bc_idx)
    bn_cat = bn_cued = None
    if bn_idx is not None:
        bn_cat, bn_cued = plan(TripleKind.BEGIN_NOISY, bn_idx)
        speakers[bn_idx] = speakers[inside_idx]    # a name known from another turn
    o_cat, o_cued = plan(TripleKind.OUTSIDE, o_idx)

    inside_paren_pos = int(rng.integers(len(utterances[inside_idx]) + 1))

    def record(kind, nonverbal, verbal, line, category, cued) -> dict:
        return {"script_id": script_id, "scene_id": scene_id, "ktype": kind.value,
                "nonverbal": nonverbal, "verbal": verbal, "line": line,
                "category": category, "cued": cued}

    lines = [f"INT. SET {ordinal:03d}. DAY."]
    records = []
    ctx = 0
    for i in range(n_turns):
        clean = " ".join(utterances[i])
        body = clean
        prefix = speakers[i]
        if i == inside_idx:
            rendered = list(utterances[i])
            rendered.insert(inside_paren_pos,
                            f"({nonverbal_text(TripleKind.INSIDE, inside_cat)})")
            body = " ".join(rendered)
        if i == bc_idx:
            prefix = f"{speakers[i]} ({nonverbal_text(TripleKind.BEGIN_CLEAN, bc_cat)})"
        elif i == bn_idx:
            prefix = f"{speakers[i]} {nonverbal_text(TripleKind.BEGIN_NOISY, bn_cat)}"
        lines.append(f"{prefix}: {body}")
        verbal = f"{speakers[i]}: {clean}"
        if i == inside_idx:
            records.append(record(TripleKind.INSIDE,
                                  nonverbal_text(TripleKind.INSIDE, inside_cat),
                                  verbal, ctx, inside_cat, inside_cued))
        if i == bc_idx:
            records.append(record(TripleKind.BEGIN_CLEAN,
                                  nonverbal_text(TripleKind.BEGIN_CLEAN, bc_cat),
                                  verbal, ctx, bc_cat, bc_cued))
        elif i == bn_idx:
            records.append(record(TripleKind.BEGIN_NOISY,
                                  nonverbal_text(TripleKind.BEGIN_NOISY, bn_cat),
                                  verbal, ctx, bn_cat, bn_cued))
        ctx += 1
        if i == o_idx:
            action = nonverbal_text(TripleKind.OUTSIDE, o_cat)
            lines.append(action)
            records.append(record(TripleKind.OUTSIDE, action, verbal, ctx, o_cat, o_cued))
            ctx += 1
    return "\n".join(lines), records


def synthesize_corpus(spec: FixtureSpec) -> SyntheticCorpus:
    scripts = []
    oracle = []
    for s in range(spec.n_scripts):
        script_id = f"synth{s:04d}"
        scene_texts = []
        for k in range(spec.scenes_per_script):
            text, records = _synth_scene(spec, script_id, k)
            scene_texts.append(text)
            oracle.extend(records)
        scripts.append(RawScript(script_id=script_id,
                                 text="\n\n".join(scene_texts) + "\n"))
    return SyntheticCorpus(spec=spec, scripts=scripts, oracle=oracle)


def extract_corpus(corpus: SyntheticCorpus, parser_cfg: ParserConfig | None = None) -> list:
    """Parse + extract every script; the real pipeline, for oracle comparison."""
    from .extraction import Stoplist, extract_all
    from .screenplay import parse_script

    cfg = parser_cfg or ParserConfig()
    stoplist = Stoplist.default()
    triples = []
    for script in corpus.scripts:
        for scene in parse_script(script, cfg):
            triples.extend(extract_all(scene, stoplist))
    return triples


def _shifted_category(kind: TripleKind, text: str, n_categories: int) -> str:
    match = _CATEGORY_RE.search(text)
    category = int(match.group(1))
    return nonverbal_text(kind, (category + 1) % n_categories)


def build_bundle(corpus: SyntheticCorpus, *, n_distractors: int = 3,
                 weak_fraction: float = 0.8, split=(0.5, 0.25, 0.25),
                 weak_label_noise: float = 0.0, weak_noise_mode: str = "uniform",
                 seed: int | None = None) -> tuple:
    """-> (DatasetBundle, info dict).

    Scripts are partitioned into a weak block and a labeled block; the weak
    block becomes one instance set per kind, the labeled block is shuffled
    and split into labeled/dev/test. Distractor pools never cross blocks.

    ``weak_label_noise`` corrupts that fraction of the weak channel, mimicking
    noisy weak supervision; the labeled, dev, and test splits always keep their
    true golds. Mode "uniform" flips instance golds to random distractors
    (unbiased noise a converged teacher can rise above); "systematic" relabels
    a corrupted triple with the next category in a fixed cycle (a consistent
    extraction mistake, so the bad signal is coherent).
    """
    from .distill import DatasetBundle
    from .instances import generate_instances

    if not 0.0 < weak_fraction < 1.0:
        raise ValueError("weak_fraction must be in (0, 1)")
    if not 0.0 <= weak_label_noise <= 1.0:
        raise ValueError("weak_label_noise must be in [0, 1]")
    if weak_noise_mode not in ("systematic", "uniform"):
        raise ValueError("weak_noise_mode must be 'systematic' or 'uniform'")
    split = tuple(float(x) for x in split)
    if len(split) != 3 or abs(sum(split) - 1.0) > 1e-9 or min(split) <= 0:
        raise ValueError("split must be three positive fractions summing to 1")
    seed = corpus.spec.seed if seed is None else seed

    triples_by_script = {}
    for script in corpus.scripts:
        triples_by_script[script.script_id] = []
    for t in extract_corpus(corpus):
        triples_by_script[t.script_id].append(t)

    ids = [s.script_id for s in corpus.scripts]
    n_weak = max(1, min(len(ids) - 1, int(round(weak_fraction * len(ids)))))
    weak_ids, labeled_ids = ids[:n_weak], ids[n_weak:]

    weak_sets = []
    skipped: dict = {}
    flipped = 0
    n_cats = corpus.spec.categories_per_kind
    for kind in TripleKind:
        kind_triples = [t for sid in weak_ids for t in triples_by_script[sid]
                        if t.kind is kind]
        noise_rng = derive_rng(seed, "weak-noise", kind.value)
        if weak_label_noise > 0.0 and weak_noise_mode == "systematic":
            relabeled = []
            for t in kind_triples:
                if noise_rng.random() < weak_label_noise:
                    t = replace(t, nonverbal=_shifted_category(kind, t.nonverbal, n_cats))
                    flipped += 1
                relabeled.append(t)
            kind_triples = relabeled
        result = generate_instances(kind_triples, n_distractors=n_distractors, seed=seed)
        for reason, count in result.skip_reasons().items():
            skipped[reason] = skipped.get(reason, 0) + count
        instances = list(result.instances)
        if weak_label_noise > 0.0 and weak_noise_mode == "uniform":
            for i, inst in enumerate(instances):
                if noise_rng.random() < weak_label_noise:
                    wrong = [g for g in range(len(inst.options)) if g != inst.gold]
                    instances[i] = replace(inst, gold=int(noise_rng.choice(wrong)))
                    flipped += 1
        weak_sets.append(instances)

    labeled_triples = [t for sid in labeled_ids for t in triples_by_script[sid]]
    result = generate_instances(labeled_triples, n_distractors=n_distractors, seed=seed)
    for reason, count in result.skip_reasons().items():
        skipped[reason] = skipped.get(reason, 0) + count
    pool = result.instances
    rng = derive_rng(seed, "labeled-split")
    shuffled = [pool[int(i)] for i in rng.permutation(len(pool))]
    n1 = int(round(split[0] * len(shuffled)))
    n2 = int(round(split[1] * len(shuffled)))
    bundle = DatasetBundle(labeled=shuffled[:n1], weak_sets=weak_sets,
                           dev=shuffled[n1 : n1 + n2], test=shuffled[n1 + n2 :])
    info = {"weak_scripts": weak_ids, "labeled_scripts": labeled_ids,
            "n_distractors": n_distractors, "split": list(split), "seed": seed,
            "weak_label_noise": weak_label_noise, "weak_noise_mode": weak_noise_mode,
            "flipped_weak_golds": flipped, "skipped": skipped,
            "sizes": {"labeled": len(bundle.labeled),
                      "weak": [len(w) for w in bundle.weak_sets],
                      "dev": len(bundle.dev), "test": len(bundle.test)}}
    return bundle, info
