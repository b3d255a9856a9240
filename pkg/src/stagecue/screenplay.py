"""Screenplay text model: scripts -> scenes -> classified lines.

A script is plain text. Blank lines (whitespace-only) separate scenes; a
scene is a maximal run of non-blank lines. Within a scene each physical
line is classified independently as a heading, a speaker turn, or an
action line:

  heading  only at scene position 0, when the line starts with a known
           heading prefix (case-insensitive);
  turn     a colon occurs within the first ``max_speaker_span_chars``
           characters with non-empty text before it;
  action   everything else.

Turn lines are decomposed into the span before the colon (speaker text,
possibly with a trailing parenthetical) and the utterance after it, which
alternates plain utterance spans with balanced parentheticals. Unbalanced
parentheses are kept as literal utterance text. The decomposition is
lossless: the raw line can always be reassembled from the parts.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from sklearn.base import BaseEstimator, TransformerMixin

DEFAULT_HEADING_LEXICON = ("INT.", "EXT.", "Interior.", "Exterior.", "内景", "外景")
DEFAULT_COLON_CHARS = ":："
DEFAULT_PAREN_PAIRS = (("(", ")"), ("（", "）"))


class ScriptDecodeError(ValueError):
    """Raised when a script file is not valid UTF-8; carries the byte offset."""

    def __init__(self, path, byte_offset: int):
        self.path = str(path)
        self.byte_offset = byte_offset
        super().__init__(f"{path}: invalid UTF-8 at byte offset {byte_offset}")


@dataclass(frozen=True)
class ParserConfig:
    heading_lexicon: tuple[str, ...] = DEFAULT_HEADING_LEXICON
    max_speaker_span_chars: int = 30
    colon_chars: str = DEFAULT_COLON_CHARS
    paren_pairs: tuple[tuple[str, str], ...] = DEFAULT_PAREN_PAIRS

    def __post_init__(self):
        if self.max_speaker_span_chars <= 0:
            raise ValueError("max_speaker_span_chars must be positive")
        if not self.colon_chars:
            raise ValueError("colon_chars must be non-empty")
        if not self.paren_pairs:
            raise ValueError("paren_pairs must be non-empty")


@dataclass(frozen=True)
class RawScript:
    script_id: str
    text: str
    source_path: str = ""


@dataclass(frozen=True)
class HeadingLine:
    text: str


@dataclass(frozen=True)
class ActionLine:
    text: str


@dataclass(frozen=True)
class UtteranceSpan:
    text: str


@dataclass(frozen=True)
class Parenthetical:
    text: str            # inner text, without the paren characters
    open_char: str
    close_char: str
    start: int           # absolute char span in the raw line, covering the parens
    end: int


@dataclass(frozen=True)
class TurnLine:
    text: str                                   # raw line
    first_span: str                             # raw text before the first colon
    utterance_offset: int                       # where the segments begin in text
    segments: tuple                             # UtteranceSpan | Parenthetical
    name_parenthetical: str | None = None       # inner text of a trailing paren in first_span
    name_paren_span: tuple[int, int] | None = None

    @property
    def speaker(self) -> str:
        """First span with any trailing parenthetical stripped."""
        if self.name_paren_span is not None:
            return self.first_span[: self.name_paren_span[0]].strip()
        return self.first_span.strip()

    def utterance_text(self) -> str:
        """Utterance with every parenthetical dropped (raw, not collapsed)."""
        return "".join(s.text for s in self.segments if isinstance(s, UtteranceSpan))

    def reassembled(self) -> str:
        parts = []
        for seg in self.segments:
            if isinstance(seg, Parenthetical):
                parts.append(seg.open_char + seg.text + seg.close_char)
            else:
                parts.append(seg.text)
        return self.text[: self.utterance_offset] + "".join(parts)


Line = HeadingLine | TurnLine | ActionLine


@dataclass(frozen=True)
class Scene:
    scene_id: str
    script_id: str
    heading: str | None
    lines: tuple          # Line tuple, in order
    raw_text: str

    def context_lines(self) -> list[str]:
        """Raw scene lines with the heading excluded."""
        return [ln.text for ln in self.lines if not isinstance(ln, HeadingLine)]

    def context_text(self) -> str:
        return "\n".join(self.context_lines())

    def turns(self) -> list[TurnLine]:
        return [ln for ln in self.lines if isinstance(ln, TurnLine)]


def normalize_newlines(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n")


def read_script(path, script_id: str | None = None) -> RawScript:
    path = Path(path)
    data = path.read_bytes()
    try:
        text = data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise ScriptDecodeError(path, exc.start) from exc
    return RawScript(script_id=script_id or path.stem, text=text, source_path=str(path))


def split_scenes(text: str) -> list[str]:
    """Maximal runs of non-blank lines; blank = whitespace-only."""
    scenes: list[str] = []
    current: list[str] = []
    for line in normalize_newlines(text).split("\n"):
        if line.strip():
            current.append(line)
        elif current:
            scenes.append("\n".join(current))
            current = []
    if current:
        scenes.append("\n".join(current))
    return scenes


def _find_colon(line: str, cfg: ParserConfig) -> int | None:
    """Index of the first colon inside the speaker window, if it has text before it."""
    window = line[: cfg.max_speaker_span_chars]
    best = None
    for ch in cfg.colon_chars:
        idx = window.find(ch)
        if idx != -1 and (best is None or idx < best):
            best = idx
    if best is None or not line[:best].strip():
        return None
    return best


def _matches_heading(line: str, cfg: ParserConfig) -> bool:
    lowered = line.strip().lower()
    return any(lowered.startswith(prefix.lower()) for prefix in cfg.heading_lexicon)


def classify_line(line: str, cfg: ParserConfig, position: int) -> str:
    """-> "heading" | "turn" | "action". ``position`` is the index within the scene."""
    if not line.strip():
        raise ValueError("classify_line requires a non-blank line")
    if position == 0 and _matches_heading(line, cfg):
        return "heading"
    if _find_colon(line, cfg) is not None:
        return "turn"
    return "action"


def _match_close(line: str, start: int, open_char: str, close_char: str) -> int | None:
    """Index of the close char balancing line[start], or None. Same-pair depth only."""
    depth = 0
    for j in range(start, len(line)):
        ch = line[j]
        if ch == open_char:
            depth += 1
        elif ch == close_char:
            depth -= 1
            if depth == 0:
                return j
    return None


def _segment_utterance(line: str, offset: int, cfg: ParserConfig) -> list:
    open_to_close = dict(cfg.paren_pairs)
    segments: list = []
    buf_start = offset
    i = offset
    n = len(line)
    while i < n:
        close = open_to_close.get(line[i])
        if close is not None:
            end = _match_close(line, i, line[i], close)
            if end is not None:
                if i > buf_start:
                    segments.append(UtteranceSpan(line[buf_start:i]))
                segments.append(Parenthetical(text=line[i + 1 : end], open_char=line[i],
                                              close_char=close, start=i, end=end + 1))
                i = end + 1
                buf_start = i
                continue
        i += 1
    if buf_start < n:
        segments.append(UtteranceSpan(line[buf_start:]))
    return segments


def _trailing_parenthetical(span: str, cfg: ParserConfig) -> tuple[str | None, tuple[int, int] | None]:
    """A balanced parenthetical at the very end of the speaker span, if any."""
    stripped = span.rstrip(" \t")
    if not stripped:
        return None, None
    pair = next(((o, c) for o, c in cfg.paren_pairs if c == stripped[-1]), None)
    if pair is None:
        return None, None
    open_char, close_char = pair
    depth = 0
    for i in range(len(stripped) - 1, -1, -1):
        ch = stripped[i]
        if ch == close_char:
            depth += 1
        elif ch == open_char:
            depth -= 1
            if depth == 0:
                if not stripped[:i].strip():
                    return None, None        # nothing before it: not a name parenthetical
                return stripped[i + 1 : len(stripped) - 1], (i, len(stripped))
    return None, None                        # unbalanced: leave it as literal name text


def parse_turn(line: str, cfg: ParserConfig) -> TurnLine:
    colon_idx = _find_colon(line, cfg)
    if colon_idx is None:
        raise ValueError(f"not a turn line: {line!r}")
    first_span = line[:colon_idx]
    rest = line[colon_idx + 1 :]
    lead = len(rest) - len(rest.lstrip(" \t"))
    offset = colon_idx + 1 + lead
    name_paren, paren_span = _trailing_parenthetical(first_span, cfg)
    return TurnLine(text=line, first_span=first_span, utterance_offset=offset,
                    segments=tuple(_segment_utterance(line, offset, cfg)),
                    name_parenthetical=name_paren, name_paren_span=paren_span)


def parse_scene(script_id: str, ordinal: int, raw: str, cfg: ParserConfig) -> Scene:
    parsed: list = []
    for pos, line in enumerate(raw.split("\n")):
        kind = classify_line(line, cfg, pos)
        if kind == "heading":
            parsed.append(HeadingLine(line))
        elif kind == "turn":
            parsed.append(parse_turn(line, cfg))
        else:
            parsed.append(ActionLine(line))
    heading = parsed[0].text if parsed and isinstance(parsed[0], HeadingLine) else None
    return Scene(scene_id=f"{script_id}/{ordinal:04d}", script_id=script_id,
                 heading=heading, lines=tuple(parsed), raw_text=raw)


def parse_script(script: RawScript, cfg: ParserConfig | None = None) -> list[Scene]:
    cfg = cfg or ParserConfig()
    return [parse_scene(script.script_id, i, raw, cfg)
            for i, raw in enumerate(split_scenes(script.text))]


class ScreenplayParser(BaseEstimator, TransformerMixin):
    """Stateless transformer: raw scripts in, parsed scenes out."""

    def __init__(self, heading_lexicon=DEFAULT_HEADING_LEXICON, max_speaker_span_chars=30,
                 colon_chars=DEFAULT_COLON_CHARS, paren_pairs=DEFAULT_PAREN_PAIRS):
        self.heading_lexicon = heading_lexicon
        self.max_speaker_span_chars = max_speaker_span_chars
        self.colon_chars = colon_chars
        self.paren_pairs = paren_pairs

    def _config(self) -> ParserConfig:
        return ParserConfig(heading_lexicon=tuple(self.heading_lexicon),
                            max_speaker_span_chars=self.max_speaker_span_chars,
                            colon_chars=self.colon_chars,
                            paren_pairs=tuple(tuple(p) for p in self.paren_pairs))

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> list[Scene]:
        """X: iterable of RawScript or plain strings. Returns scenes, input order."""
        cfg = self._config()
        scenes: list[Scene] = []
        for i, item in enumerate(X):
            script = item if isinstance(item, RawScript) else RawScript(f"script{i:04d}", str(item))
            scenes.extend(parse_script(script, cfg))
        return scenes
