"""Verbal/nonverbal knowledge extraction from parsed scenes.

Each extracted item is a (verbal, nonverbal, context) triple. The verbal
message is a rendered turn ("Speaker: words ..."); the nonverbal message is
stage-direction text whose position determines the triple kind:

  begin_clean   trailing parenthetical on the speaker span: "Emily (oh god): ..."
  begin_noisy   non-parenthesized text after a known speaker name in the
                speaker span: "Andy smiling: ..."
  inside        parenthetical inside the utterance: "... not. (thinking) ..."
  outside       an action line, paired with the nearest preceding turn

The context is the scene text without its heading. Every triple carries a
char-span anchor (context line index, start, end) locating the nonverbal
text so that it can be deleted exactly; spans absorb the horizontal
whitespace immediately before them, so deletion leaves no doubled spaces.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from sklearn.base import BaseEstimator, TransformerMixin

from .screenplay import ActionLine, HeadingLine, Scene, TurnLine
from .util import collapse_ws


class TripleKind(str, enum.Enum):
    BEGIN_CLEAN = "begin_clean"
    BEGIN_NOISY = "begin_noisy"
    INSIDE = "inside"
    OUTSIDE = "outside"


_KIND_RANK = {kind: i for i, kind in enumerate(TripleKind)}

_TRAILING_PUNCT = ".,;:!?…。．！？，、"


def _normalize_term(term: str) -> str:
    return term.replace("’", "'").replace("‘", "'").strip().casefold()


@dataclass(frozen=True)
class Stoplist:
    entries: frozenset

    @classmethod
    def from_terms(cls, terms) -> "Stoplist":
        return cls(frozenset(_normalize_term(t) for t in terms if _normalize_term(t)))

    @classmethod
    def from_file(cls, path) -> "Stoplist":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls.from_terms(ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#"))

    @classmethod
    def default(cls) -> "Stoplist":
        text = resources.files("stagecue").joinpath("data/stoplist_default.txt").read_text("utf-8")
        return cls.from_terms(ln for ln in text.splitlines()
                              if ln.strip() and not ln.lstrip().startswith("#"))

    def rejects(self, candidate: str) -> bool:
        norm = _normalize_term(candidate)
        if norm in self.entries:
            return True
        return norm.rstrip(_TRAILING_PUNCT).strip() in self.entries


@dataclass(frozen=True)
class Anchor:
    line: int     # context-line index (heading excluded)
    start: int    # char span within that line; outside triples span the whole line
    end: int


@dataclass(frozen=True)
class KnowledgeTriple:
    kind: TripleKind
    verbal: str
    nonverbal: str
    context: str
    anchor: Anchor
    verbal_line: int      # context-line index of the turn providing the verbal message
    script_id: str
    scene_id: str


@dataclass
class ExtractionStats:
    emitted: Counter = field(default_factory=Counter)
    stoplist_rejected: Counter = field(default_factory=Counter)
    empty_rejected: Counter = field(default_factory=Counter)
    unanchored_actions: int = 0

    def as_dict(self) -> dict:
        return {
            "emitted": {k.value: self.emitted.get(k, 0) for k in TripleKind},
            "stoplist_rejected": {k.value: self.stoplist_rejected.get(k, 0) for k in TripleKind},
            "empty_rejected": {k.value: self.empty_rejected.get(k, 0) for k in TripleKind},
            "unanchored_actions": self.unanchored_actions,
            "total_emitted": sum(self.emitted.values()),
        }


def triple_to_record(t: KnowledgeTriple) -> dict:
    return {
        "ktype": t.kind.value,
        "verbal": t.verbal,
        "nonverbal": t.nonverbal,
        "context": t.context,
        "anchor": {"line": t.anchor.line, "start": t.anchor.start, "end": t.anchor.end},
        "verbal_line": t.verbal_line,
        "script_id": t.script_id,
        "scene_id": t.scene_id,
    }


def triple_from_record(rec: dict) -> KnowledgeTriple:
    a = rec["anchor"]
    return KnowledgeTriple(kind=TripleKind(rec["ktype"]), verbal=rec["verbal"],
                           nonverbal=rec["nonverbal"], context=rec["context"],
                           anchor=Anchor(a["line"], a["start"], a["end"]),
                           verbal_line=rec["verbal_line"], script_id=rec["script_id"],
                           scene_id=rec["scene_id"])


def speaker_names(scene: Scene) -> set:
    """Paren-stripped first spans of every turn in the scene."""
    return {t.speaker for t in scene.turns()}


def _extend_left(line: str, start: int) -> int:
    """Grow a span leftward over horizontal whitespace."""
    while start > 0 and line[start - 1] in " \t":
        start -= 1
    return start


def _rendered_utterance(turn: TurnLine) -> str:
    return collapse_ws(turn.utterance_text())


def _render_verbal(name: str, utterance: str) -> str:
    return f"{name}: {utterance}".strip()


def _context_indices(scene: Scene) -> list[tuple[int, object]]:
    """(context line index, line) pairs, skipping the heading."""
    out = []
    idx = 0
    for ln in scene.lines:
        if isinstance(ln, HeadingLine):
            continue
        out.append((idx, ln))
        idx += 1
    return out


def _accept_nonverbal(kind: TripleKind, raw: str, stoplist: Stoplist,
                      stats: ExtractionStats | None) -> str | None:
    text = collapse_ws(raw)
    if not text:
        if stats is not None:
            stats.empty_rejected[kind] += 1
        return None
    if stoplist.rejects(text):
        if stats is not None:
            stats.stoplist_rejected[kind] += 1
        return None
    return text


def extract_begin_clean(scene: Scene, stoplist: Stoplist,
                        stats: ExtractionStats | None = None) -> list[KnowledgeTriple]:
    context = scene.context_text()
    triples = []
    for idx, ln in _context_indices(scene):
        if not isinstance(ln, TurnLine) or ln.name_paren_span is None:
            continue
        text = _accept_nonverbal(TripleKind.BEGIN_CLEAN, ln.name_parenthetical or "",
                                 stoplist, stats)
        if text is None:
            continue
        start, end = ln.name_paren_span
        anchor = Anchor(idx, _extend_left(ln.text, start), end)
        verbal = _render_verbal(ln.speaker, _rendered_utterance(ln))
        triples.append(KnowledgeTriple(TripleKind.BEGIN_CLEAN, verbal, text, context,
                                       anchor, idx, scene.script_id, scene.scene_id))
        if stats is not None:
            stats.emitted[TripleKind.BEGIN_CLEAN] += 1
    return triples


def extract_begin_noisy(scene: Scene, stoplist: Stoplist,
                        stats: ExtractionStats | None = None,
                        require_space_boundary: bool = True) -> list[KnowledgeTriple]:
    """Speaker spans that extend a known name from another turn.

    Known names for a turn are the other turns' speakers and raw first
    spans (both forms, so a span exactly equal to another turn's span is
    never split). The longest matching name wins; with the boundary
    requirement the name must be followed by whitespace inside the span.
    """
    context = scene.context_text()
    turns = scene.turns()
    triples = []
    for idx, ln in _context_indices(scene):
        if not isinstance(ln, TurnLine):
            continue
        span = ln.speaker
        known = set()
        for other in turns:
            if other is ln:
                continue
            known.add(other.speaker)
            known.add(other.first_span.strip())
        known.discard("")
        if span in known:
            continue
        match = None
        for name in sorted(known, key=len, reverse=True):
            if not span.startswith(name) or len(span) <= len(name):
                continue
            if require_space_boundary and span[len(name)] not in " \t":
                continue
            match = name
            break
        if match is None:
            continue
        text = _accept_nonverbal(TripleKind.BEGIN_NOISY, span[len(match):], stoplist, stats)
        if text is None:
            continue
        lead = len(ln.first_span) - len(ln.first_span.lstrip())
        anchor = Anchor(idx, lead + len(match), lead + len(span))
        verbal = _render_verbal(match, _rendered_utterance(ln))
        triples.append(KnowledgeTriple(TripleKind.BEGIN_NOISY, verbal, text, context,
                                       anchor, idx, scene.script_id, scene.scene_id))
        if stats is not None:
            stats.emitted[TripleKind.BEGIN_NOISY] += 1
    return triples


def extract_inside(scene: Scene, stoplist: Stoplist,
                   stats: ExtractionStats | None = None) -> list[KnowledgeTriple]:
    from .screenplay import Parenthetical, UtteranceSpan

    context = scene.context_text()
    triples = []
    for idx, ln in _context_indices(scene):
        if not isinstance(ln, TurnLine):
            continue
        for seg_i, seg in enumerate(ln.segments):
            if not isinstance(seg, Parenthetical):
                continue
            text = _accept_nonverbal(TripleKind.INSIDE, seg.text, stoplist, stats)
            if text is None:
                continue
            parts = []
            for j, other in enumerate(ln.segments):
                if j == seg_i:
                    continue
                if isinstance(other, UtteranceSpan):
                    parts.append(other.text)
                else:
                    parts.append(other.open_char + other.text + other.close_char)
            verbal = _render_verbal(ln.speaker, collapse_ws("".join(parts)))
            anchor = Anchor(idx, _extend_left(ln.text, seg.start), seg.end)
            triples.append(KnowledgeTriple(TripleKind.INSIDE, verbal, text, context,
                                           anchor, idx, scene.script_id, scene.scene_id))
            if stats is not None:
                stats.emitted[TripleKind.INSIDE] += 1
    return triples


def extract_outside(scene: Scene, stoplist: Stoplist,
                    stats: ExtractionStats | None = None) -> list[KnowledgeTriple]:
    """Action lines paired with the nearest preceding turn in the scene."""
    context = scene.context_text()
    triples = []
    last_turn: tuple[int, TurnLine] | None = None
    for idx, ln in _context_indices(scene):
        if isinstance(ln, TurnLine):
            last_turn = (idx, ln)
            continue
        if not isinstance(ln, ActionLine):
            continue
        if last_turn is None:
            if stats is not None:
                stats.unanchored_actions += 1
            continue
        text = _accept_nonverbal(TripleKind.OUTSIDE, ln.text, stoplist, stats)
        if text is None:
            continue
        turn_idx, turn = last_turn
        verbal = _render_verbal(turn.speaker, _rendered_utterance(turn))
        anchor = Anchor(idx, 0, len(ln.text))
        triples.append(KnowledgeTriple(TripleKind.OUTSIDE, verbal, text, context,
                                       anchor, turn_idx, scene.script_id, scene.scene_id))
        if stats is not None:
            stats.emitted[TripleKind.OUTSIDE] += 1
    return triples


def extract_all(scene: Scene, stoplist: Stoplist | None = None,
                stats: ExtractionStats | None = None,
                require_space_boundary: bool = True) -> list[KnowledgeTriple]:
    """All four extractors, merged in (line, kind, span start) order."""
    stoplist = stoplist or Stoplist.default()
    triples = []
    triples.extend(extract_begin_clean(scene, stoplist, stats))
    triples.extend(extract_begin_noisy(scene, stoplist, stats, require_space_boundary))
    triples.extend(extract_inside(scene, stoplist, stats))
    triples.extend(extract_outside(scene, stoplist, stats))
    triples.sort(key=lambda t: (t.anchor.line, _KIND_RANK[t.kind], t.anchor.start))
    return triples


class KnowledgeExtractor(BaseEstimator, TransformerMixin):
    """Stateless transformer: parsed scenes in, knowledge triples out.

    ``stoplist`` may be a Stoplist, a path to a terms file, an iterable of
    terms, or None for the shipped default. Per-kind counts from the last
    transform are kept on ``stats_``.
    """

    def __init__(self, stoplist=None, require_space_boundary=True):
        self.stoplist = stoplist
        self.require_space_boundary = require_space_boundary

    def _resolve_stoplist(self) -> Stoplist:
        sl = self.stoplist
        if sl is None:
            return Stoplist.default()
        if isinstance(sl, Stoplist):
            return sl
        if isinstance(sl, (str, Path)):
            return Stoplist.from_file(sl)
        return Stoplist.from_terms(sl)

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> list[KnowledgeTriple]:
        stoplist = self._resolve_stoplist()
        stats = ExtractionStats()
        triples: list[KnowledgeTriple] = []
        for scene in X:
            triples.extend(extract_all(scene, stoplist, stats, self.require_space_boundary))
        self.stats_ = stats
        return triples
