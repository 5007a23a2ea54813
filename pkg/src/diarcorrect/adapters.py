"""Vendor ASR output parsers.

Each adapter reads the smallest field set needed to build a
:class:`~diarcorrect.transcript.Transcript`:

- AWS Transcribe: ``results.items[]`` of type ``pronunciation`` with
  ``alternatives[0].content``, ``speaker_label``, ``start_time``, ``end_time``.
  Items without ``speaker_label`` are looked up in
  ``results.speaker_labels.segments[].items[]`` by start time.
- Azure Speech-to-Text v3.2 batch: ``recognizedPhrases[]`` ordered by
  ``offsetInTicks``, phrase-level ``speaker``, words from
  ``nBest[0].words[]``.
- WhisperX: ``segments[].words[]``; a word without ``speaker`` inherits its
  segment's speaker.
- GCP speech_v1p1beta: the last result's ``alternatives[0].words[]`` with
  ``speakerTag``.

Vendor speaker labels are remapped to 1..K in order of first appearance.
"""

from __future__ import annotations

import enum
import json
from typing import Any, Callable, Iterator

from .transcript import Source, Transcript, Word, from_json, normalize_text

__all__ = ["AsrFormat", "MalformedDocument", "UnlabeledWord", "ingest", "count_speakers"]

_TICKS_PER_SECOND = 10_000_000


class AsrFormat(str, enum.Enum):
    AWS = "aws"
    AZURE = "azure"
    WHISPERX = "whisperx"
    GCP = "gcp"
    CANONICAL = "canonical"


class MalformedDocument(ValueError):
    def __init__(self, path: str, detail: str = ""):
        self.path = path
        msg = f"malformed document at {path}" if path else "malformed document"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class UnlabeledWord(ValueError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"unlabeled word at index {index}")


# (text, vendor speaker label or None, start, end)
_Raw = tuple[str, Any, "float | None", "float | None"]


def _get(node: Any, key: str | int, path: str) -> Any:
    try:
        return node[key]
    except (KeyError, IndexError, TypeError):
        where = f"{path}[{key}]" if isinstance(key, int) else (f"{path}.{key}" if path else key)
        raise MalformedDocument(where, "missing field") from None


def _list(node: Any, key: str, path: str) -> list:
    value = _get(node, key, path)
    if not isinstance(value, list):
        raise MalformedDocument(f"{path}.{key}" if path else key, "expected a list")
    return value


def _seconds(value: Any, path: str) -> float | None:
    if value is None:
        return None
    if isinstance(value, bool):
        raise MalformedDocument(path, "expected a time value")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value[:-1] if value.endswith("s") else value)
        except ValueError:
            raise MalformedDocument(path, f"bad time {value!r}") from None
    if isinstance(value, dict):
        return float(value.get("seconds", 0)) + float(value.get("nanos", 0)) / 1e9
    raise MalformedDocument(path, "expected a time value")


def _aws(doc: Any) -> Iterator[_Raw]:
    results = _get(doc, "results", "")
    items = _list(results, "items", "results")
    by_start: dict[str, str] = {}
    labels = results.get("speaker_labels") if isinstance(results, dict) else None
    if isinstance(labels, dict):
        for seg in labels.get("segments", []):
            for it in seg.get("items", []):
                if "start_time" in it and "speaker_label" in it:
                    by_start[str(it["start_time"])] = it["speaker_label"]
    for i, item in enumerate(items):
        path = f"results.items[{i}]"
        kind = _get(item, "type", path)
        if kind != "pronunciation":
            continue
        alts = _list(item, "alternatives", path)
        content = _get(_get(alts, 0, f"{path}.alternatives"), "content", f"{path}.alternatives[0]")
        speaker = item.get("speaker_label")
        if speaker is None and "start_time" in item:
            speaker = by_start.get(str(item["start_time"]))
        yield (
            content,
            speaker,
            _seconds(item.get("start_time"), f"{path}.start_time"),
            _seconds(item.get("end_time"), f"{path}.end_time"),
        )


def _azure(doc: Any) -> Iterator[_Raw]:
    phrases = _list(doc, "recognizedPhrases", "")
    indexed = []
    for i, ph in enumerate(phrases):
        indexed.append((_get(ph, "offsetInTicks", f"recognizedPhrases[{i}]"), i, ph))
    indexed.sort(key=lambda x: (x[0], x[1]))
    for _, i, ph in indexed:
        path = f"recognizedPhrases[{i}]"
        speaker = ph.get("speaker")
        best = _get(_list(ph, "nBest", path), 0, f"{path}.nBest")
        for j, w in enumerate(_list(best, "words", f"{path}.nBest[0]")):
            wpath = f"{path}.nBest[0].words[{j}]"
            offset = _get(w, "offsetInTicks", wpath)
            duration = w.get("durationInTicks", 0)
            start = float(offset) / _TICKS_PER_SECOND
            yield (_get(w, "word", wpath), speaker, start, start + float(duration) / _TICKS_PER_SECOND)


def _whisperx(doc: Any) -> Iterator[_Raw]:
    for i, seg in enumerate(_list(doc, "segments", "")):
        path = f"segments[{i}]"
        seg_speaker = seg.get("speaker")
        for j, w in enumerate(_list(seg, "words", path)):
            wpath = f"{path}.words[{j}]"
            yield (
                _get(w, "word", wpath),
                w.get("speaker", seg_speaker),
                _seconds(w.get("start"), f"{wpath}.start"),
                _seconds(w.get("end"), f"{wpath}.end"),
            )


def _gcp(doc: Any) -> Iterator[_Raw]:
    results = _list(doc, "results", "")
    if not results:
        raise MalformedDocument("results", "no results")
    last = len(results) - 1
    path = f"results[{last}]"
    alt = _get(_list(results[last], "alternatives", path), 0, f"{path}.alternatives")
    for j, w in enumerate(_list(alt, "words", f"{path}.alternatives[0]")):
        wpath = f"{path}.alternatives[0].words[{j}]"
        yield (
            _get(w, "word", wpath),
            w.get("speakerTag"),
            _seconds(w.get("startTime"), f"{wpath}.startTime"),
            _seconds(w.get("endTime"), f"{wpath}.endTime"),
        )


_READERS: dict[AsrFormat, Callable[[Any], Iterator[_Raw]]] = {
    AsrFormat.AWS: _aws,
    AsrFormat.AZURE: _azure,
    AsrFormat.WHISPERX: _whisperx,
    AsrFormat.GCP: _gcp,
}


def ingest(fmt: AsrFormat | str, document: bytes | str, id: str = "transcript") -> Transcript:
    """Parse a vendor document into a normalized, densely labeled transcript.

    Raises:
        MalformedDocument: the document does not have the expected shape;
            the message names the first offending path.
        UnlabeledWord: a word carries no speaker attribution.
    """
    fmt = AsrFormat(fmt)
    try:
        doc = json.loads(document)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedDocument("", f"not JSON ({exc})") from None
    if fmt is AsrFormat.CANONICAL:
        if not isinstance(doc, dict):
            raise MalformedDocument("", "expected an object")
        return from_json(doc)
    if not isinstance(doc, dict):
        raise MalformedDocument("", "expected an object")

    dense: dict[Any, int] = {}
    words: list[Word] = []
    for text, speaker, start, end in _READERS[fmt](doc):
        if not isinstance(text, str):
            raise MalformedDocument(f"word {len(words)}", "text is not a string")
        tokens = normalize_text(text)
        if not tokens:
            continue
        if speaker is None or speaker == "":
            raise UnlabeledWord(len(words))
        spk = dense.setdefault(speaker, len(dense) + 1)
        if start is not None and end is not None and end < start:
            end = start
        words.extend(Word(tok, spk, start, end) for tok in tokens)
    return Transcript(id=id, words=tuple(words), source=Source(fmt.value))


def count_speakers(t: Transcript) -> int:
    return len(t.speaker_set)
