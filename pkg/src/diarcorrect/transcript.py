"""Canonical transcript model, text normalization and speaker-token serialization.

Every stage of the toolkit exchanges :class:`Transcript` objects: an ordered
sequence of normalized words, each carrying an integer speaker id. LLM prompts
and completions use a flat text form where a speaker token such as
``<speaker:1>`` opens every speaker turn.
"""

from __future__ import annotations

import enum
import json
import re
import unicodedata
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

__all__ = [
    "Source",
    "Word",
    "Transcript",
    "SerializationConfig",
    "DEFAULT_SERIALIZATION",
    "normalize_text",
    "serialize",
    "parse_serialized",
    "NoSpeakerLabels",
    "to_json",
    "from_json",
    "load_transcript",
    "save_transcript",
]

_APOSTROPHES = frozenset("'’")


class Source(str, enum.Enum):
    AWS = "aws"
    AZURE = "azure"
    WHISPERX = "whisperx"
    GCP = "gcp"
    REFERENCE = "reference"
    SYNTHETIC = "synthetic"
    CORRECTED = "corrected"


@dataclass(frozen=True, slots=True)
class Word:
    """One transcribed word with its speaker label.

    Attributes:
        text: Normalized token; non-empty, no whitespace.
        speaker: Positive integer speaker id.
        start_time: Optional start offset in seconds.
        end_time: Optional end offset in seconds.
    """

    text: str
    speaker: int
    start_time: float | None = None
    end_time: float | None = None

    def __post_init__(self) -> None:
        if not self.text or any(ch.isspace() for ch in self.text):
            raise ValueError(f"invalid word text {self.text!r}")
        if isinstance(self.speaker, bool) or not isinstance(self.speaker, int) or self.speaker < 1:
            raise ValueError(f"speaker id must be a positive integer, got {self.speaker!r}")
        if self.start_time is not None and self.start_time < 0:
            raise ValueError(f"negative start_time {self.start_time}")
        if (
            self.start_time is not None
            and self.end_time is not None
            and self.end_time < self.start_time
        ):
            raise ValueError(f"end_time {self.end_time} precedes start_time {self.start_time}")

    def relabel(self, speaker: int) -> Word:
        return replace(self, speaker=speaker)


@dataclass(frozen=True, slots=True)
class Transcript:
    """An ordered, speaker-labeled word sequence.

    Word order is authoritative. An empty transcript is allowed as an
    intermediate value (e.g. label transfer onto no words).
    """

    id: str
    words: tuple[Word, ...]
    source: Source = Source.REFERENCE

    def __post_init__(self) -> None:
        if not isinstance(self.words, tuple):
            object.__setattr__(self, "words", tuple(self.words))
        if not isinstance(self.source, Source):
            object.__setattr__(self, "source", Source(self.source))
        last_start = None
        for i, w in enumerate(self.words):
            if w.start_time is None:
                continue
            if last_start is not None and w.start_time < last_start:
                raise ValueError(f"start_time decreases at word {i}")
            last_start = w.start_time

    def __len__(self) -> int:
        return len(self.words)

    @property
    def texts(self) -> list[str]:
        return [w.text for w in self.words]

    @property
    def speakers(self) -> list[int]:
        return [w.speaker for w in self.words]

    @property
    def speaker_set(self) -> set[int]:
        return {w.speaker for w in self.words}

    @property
    def has_timestamps(self) -> bool:
        return bool(self.words) and all(
            w.start_time is not None and w.end_time is not None for w in self.words
        )

    def slice(self, start: int, end: int) -> Transcript:
        return replace(self, words=self.words[start:end])

    def with_labels(self, labels: Sequence[int], source: Source | None = None) -> Transcript:
        """Return a copy with speaker labels replaced, words untouched."""
        if len(labels) != len(self.words):
            raise ValueError("label count does not match word count")
        words = tuple(w if w.speaker == s else w.relabel(s) for w, s in zip(self.words, labels))
        return replace(self, words=words, source=source or self.source)

    def turns(self) -> list[tuple[int, int]]:
        """Half-open index ranges of maximal same-speaker runs."""
        out: list[tuple[int, int]] = []
        start = 0
        for i in range(1, len(self.words) + 1):
            if i == len(self.words) or self.words[i].speaker != self.words[start].speaker:
                out.append((start, i))
                start = i
        return out if self.words else []

    @classmethod
    def from_pairs(
        cls,
        pairs: Iterable[tuple[str, int]],
        id: str = "t",
        source: Source = Source.REFERENCE,
    ) -> Transcript:
        return cls(id=id, words=tuple(Word(text, spk) for text, spk in pairs), source=source)


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def normalize_text(raw: str) -> list[str]:
    """Lowercase, strip punctuation and split on whitespace.

    Apostrophes flanked by letters on both sides survive so contractions
    stay one token. Digits and symbols pass through unchanged.

    >>> normalize_text("Hello, World!")
    ['hello', 'world']
    >>> normalize_text("that's right.")
    ["that's", 'right']
    """
    text = raw.lower()
    kept = []
    n = len(text)
    for i, ch in enumerate(text):
        if not _is_punct(ch):
            kept.append(ch)
        elif (
            ch in _APOSTROPHES
            and 0 < i < n - 1
            and text[i - 1].isalpha()
            and text[i + 1].isalpha()
        ):
            kept.append(ch)
    return "".join(kept).split()


@dataclass(frozen=True)
class SerializationConfig:
    """How speaker-change tokens are rendered in flat text.

    ``speaker_token_pattern`` must contain ``{id}`` exactly once and at least
    one character that normalization strips, so a rendered token can never
    collide with a normalized word.
    """

    speaker_token_pattern: str = "<speaker:{id}>"
    _regex: re.Pattern = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        pattern = self.speaker_token_pattern
        if pattern.count("{id}") != 1:
            raise ValueError("speaker_token_pattern must contain '{id}' exactly once")
        sample = pattern.format(id=1)
        if any(ch.isspace() for ch in sample):
            raise ValueError("speaker token must not contain whitespace")
        if normalize_text(sample) == [sample]:
            raise ValueError("speaker token must contain a character removed by normalization")
        head, tail = pattern.split("{id}")
        object.__setattr__(self, "_regex", re.compile(re.escape(head) + r"(\d+)" + re.escape(tail)))

    def token(self, speaker: int) -> str:
        return self.speaker_token_pattern.format(id=speaker)

    @property
    def regex(self) -> re.Pattern:
        return self._regex


DEFAULT_SERIALIZATION = SerializationConfig()


class NoSpeakerLabels(ValueError):
    """Raised when text holds no speaker token at all."""


def serialize(t: Transcript, cfg: SerializationConfig = DEFAULT_SERIALIZATION) -> str:
    """Render a transcript as ``<speaker:1> hi there <speaker:2> yes``."""
    if not t.words:
        raise ValueError("empty transcript")
    parts: list[str] = []
    prev = None
    for w in t.words:
        if w.speaker != prev:
            parts.append(cfg.token(w.speaker))
            prev = w.speaker
        parts.append(w.text)
    return " ".join(parts)


def parse_serialized(
    text: str,
    cfg: SerializationConfig = DEFAULT_SERIALIZATION,
    id: str = "parsed",
    source: Source = Source.CORRECTED,
) -> Transcript:
    """Parse speaker-token text back into a transcript.

    Anything before the first speaker token is ignored. Text after each token
    is normalized and attributed to that token's speaker.
    """
    matches = list(cfg.regex.finditer(text))
    if not matches:
        raise NoSpeakerLabels("no speaker labels in text")
    words: list[Word] = []
    for k, m in enumerate(matches):
        speaker = int(m.group(1))
        if speaker < 1:
            continue
        end = matches[k + 1].start() if k + 1 < len(matches) else len(text)
        words.extend(Word(tok, speaker) for tok in normalize_text(text[m.end() : end]))
    return Transcript(id=id, words=tuple(words), source=source)


def to_json(t: Transcript) -> dict:
    words = []
    for w in t.words:
        entry: dict = {"text": w.text, "speaker": w.speaker}
        if w.start_time is not None:
            entry["start"] = w.start_time
        if w.end_time is not None:
            entry["end"] = w.end_time
        words.append(entry)
    return {"id": t.id, "source": t.source.value, "words": words}


def from_json(doc: dict) -> Transcript:
    try:
        words = tuple(
            Word(w["text"], w["speaker"], w.get("start"), w.get("end")) for w in doc["words"]
        )
        return Transcript(id=str(doc["id"]), words=words, source=Source(doc.get("source", "reference")))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed canonical transcript: {exc}") from exc


def load_transcript(path: str | Path) -> Transcript:
    with open(path, encoding="utf-8") as fh:
        return from_json(json.load(fh))


def save_transcript(t: Transcript, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_json(t), fh, ensure_ascii=False, indent=1)
        fh.write("\n")
