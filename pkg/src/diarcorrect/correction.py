"""LLM-based diarization correction.

A transcript is cut into token-budgeted segments, each segment is wrapped in
a prompt and sent to a completion client, and every completion goes through
:func:`parse_completion`, which keeps only the speaker labels and transfers
them back onto the segment's original words. Wording can therefore never
change, whatever the model returns.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

from .prep import SegmentationConfig, segment_transcript
from .prompts import PromptVariant, build_prompt, strip_template, template_affixes
from .tpst import transferred_labels
from .transcript import (
    DEFAULT_SERIALIZATION,
    NoSpeakerLabels,
    SerializationConfig,
    Source,
    Transcript,
    parse_serialized,
    serialize,
)

__all__ = [
    "CompletionParams",
    "CompletionClient",
    "HttpCompletionClient",
    "EchoClient",
    "OracleClient",
    "ScriptedClient",
    "FixtureClient",
    "fixture_key",
    "SegmentStatus",
    "ParsedCompletion",
    "CorrectionResult",
    "extract_transcript_region",
    "parse_completion",
    "correct_transcript",
    "template_overhead",
]

logger = logging.getLogger(__name__)

END_MARKERS = ("</s>", "<|eot_id|>", "<|end_of_text|>", "<|im_end|>", "[INST]", "[/INST]")
DEFAULT_MIN_COVERAGE = 0.5


@dataclass(frozen=True)
class CompletionParams:
    max_tokens: int = 4096
    temperature: float = 0.0
    stop: tuple[str, ...] = ("</s>",)


class CompletionClient(Protocol):
    def complete(self, prompt: str, params: CompletionParams) -> str: ...


class HttpCompletionClient:
    """POSTs ``{"prompt", "max_tokens", "temperature", "stop"}``, reads ``{"text"}``.

    URL and bearer token default to ``DIARIZE_LLM_URL`` / ``DIARIZE_LLM_TOKEN``.
    """

    def __init__(self, url: str | None = None, token: str | None = None, timeout: float = 120.0):
        self.url = url or os.environ.get("DIARIZE_LLM_URL")
        if not self.url:
            raise ValueError("no completion endpoint: set DIARIZE_LLM_URL")
        self.token = token if token is not None else os.environ.get("DIARIZE_LLM_TOKEN")
        self.timeout = timeout

    def complete(self, prompt: str, params: CompletionParams) -> str:
        body = json.dumps(
            {
                "prompt": prompt,
                "max_tokens": params.max_tokens,
                "temperature": params.temperature,
                "stop": list(params.stop),
            }
        ).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        req = urllib.request.Request(self.url, data=body, headers=headers, method="POST")
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            payload = json.loads(resp.read().decode("utf-8"))
        text = payload.get("text") if isinstance(payload, dict) else None
        if not isinstance(text, str):
            raise ValueError("completion response lacks a 'text' string")
        return text


class EchoClient:
    """Returns the prompt's transcript block verbatim."""

    def __init__(self, variant: PromptVariant | str | None = None):
        self.variant = variant

    def complete(self, prompt: str, params: CompletionParams) -> str:
        return strip_template(prompt, self.variant)


class OracleClient:
    """Answers each prompt with the oracle labeling of the same words.

    The prompt's words are located as a contiguous run inside one of the
    given oracle transcripts; the first occurrence wins.
    """

    _KEY = 3

    def __init__(
        self,
        oracles: Iterable[Transcript],
        variant: PromptVariant | str | None = None,
        serialization: SerializationConfig = DEFAULT_SERIALIZATION,
    ):
        self.oracles = [o for o in oracles if o.words]
        self.variant = variant
        self.serialization = serialization
        self._texts = [o.texts for o in self.oracles]
        self._index: dict[tuple[str, ...], list[tuple[int, int]]] = {}
        for k, texts in enumerate(self._texts):
            for i in range(len(texts) - self._KEY + 1):
                self._index.setdefault(tuple(texts[i : i + self._KEY]), []).append((k, i))

    def _locate(self, words: list[str]) -> tuple[int, int]:
        n = len(words)
        if n >= self._KEY:
            candidates = self._index.get(tuple(words[: self._KEY]), [])
        else:
            candidates = [(k, i) for k, texts in enumerate(self._texts) for i in range(len(texts))]
        for k, i in candidates:
            if self._texts[k][i : i + n] == words:
                return k, i
        raise LookupError("segment not found in any oracle transcript")

    def complete(self, prompt: str, params: CompletionParams) -> str:
        block = strip_template(prompt, self.variant)
        words = parse_serialized(block, self.serialization).texts
        k, i = self._locate(words)
        return serialize(self.oracles[k].slice(i, i + len(words)), self.serialization)


class ScriptedClient:
    """Test double replaying canned completions.

    ``script`` is either a callable ``prompt -> str`` or a sequence consumed in
    call order; exception instances in the sequence are raised.
    """

    def __init__(self, script: Sequence[str | BaseException] | Callable[[str], str]):
        self._fn = script if callable(script) else None
        self._items = None if callable(script) else list(script)
        self._lock = threading.Lock()
        self.calls: list[str] = []

    def complete(self, prompt: str, params: CompletionParams) -> str:
        with self._lock:
            self.calls.append(prompt)
            if self._fn is not None:
                item: str | BaseException = self._fn(prompt)
            else:
                if not self._items:
                    raise RuntimeError("script exhausted")
                item = self._items.pop(0)
        if isinstance(item, BaseException):
            raise item
        return item


def fixture_key(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class FixtureClient:
    """Serves completions stored as ``<sha256 of prompt>.txt`` files in ``directory``."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise FileNotFoundError(f"fixture directory {self.directory} does not exist")

    @staticmethod
    def write(directory: str | Path, prompt: str, completion: str) -> Path:
        path = Path(directory) / f"{fixture_key(prompt)}.txt"
        path.write_text(completion, encoding="utf-8")
        return path

    def complete(self, prompt: str, params: CompletionParams) -> str:
        path = self.directory / f"{fixture_key(prompt)}.txt"
        if not path.exists():
            raise KeyError(f"no fixture for prompt {fixture_key(prompt)[:12]}")
        return path.read_text(encoding="utf-8")


# --- parsing -----------------------------------------------------------------


@dataclass(frozen=True)
class SegmentStatus:
    ok: bool
    reason: str = ""

    def __str__(self) -> str:
        return "ok" if self.ok else f"fell_back({self.reason})"


OK = SegmentStatus(True)


@dataclass(frozen=True)
class ParsedCompletion:
    transcript: Transcript
    status: SegmentStatus
    coverage: float = 0.0


def extract_transcript_region(completion: str, cfg: SerializationConfig = DEFAULT_SERIALIZATION) -> str:
    """Strip chatter around the speaker-token-bearing part of a completion.

    The region starts at the first speaker token, stops at the first
    end-of-text or chat marker after it, and drops trailing blank-line
    separated paragraphs that carry no speaker token.
    """
    first = cfg.regex.search(completion)
    if first is None:
        raise NoSpeakerLabels("no speaker labels in text")
    region = completion[first.start() :]
    cut = min((i for i in (region.find(m) for m in END_MARKERS) if i > 0), default=len(region))
    region = region[:cut]
    paragraphs = region.replace("\r\n", "\n").split("\n\n")
    while len(paragraphs) > 1 and not cfg.regex.search(paragraphs[-1]):
        paragraphs.pop()
    return "\n\n".join(paragraphs)


def parse_completion(
    input_segment: Transcript,
    completion: str,
    *,
    cfg: SerializationConfig = DEFAULT_SERIALIZATION,
    min_coverage: float = DEFAULT_MIN_COVERAGE,
    allowed_speakers: set[int] | None = None,
) -> ParsedCompletion:
    """Apply a completion's speaker labels to ``input_segment``'s own words.

    Falls back to the unchanged input when the completion has no speaker
    labels, uses a speaker outside ``allowed_speakers`` (default: the
    segment's speakers), or when fewer than ``min_coverage`` of the input
    words are exactly matched by completion words.
    """
    if not input_segment.words:
        raise ValueError("empty input segment")
    allowed = allowed_speakers if allowed_speakers is not None else input_segment.speaker_set

    def fallback(reason: str, coverage: float = 0.0) -> ParsedCompletion:
        return ParsedCompletion(input_segment, SegmentStatus(False, reason), coverage)

    try:
        parsed = parse_serialized(extract_transcript_region(completion, cfg), cfg)
    except NoSpeakerLabels:
        return fallback("no speaker labels")
    if not parsed.words:
        return fallback("no words in completion")
    if not parsed.speaker_set <= allowed:
        return fallback("unknown speaker label")
    labels, matched = transferred_labels(parsed, input_segment.texts)
    coverage = matched / len(input_segment)
    if coverage < min_coverage:
        return fallback("low coverage", coverage)
    return ParsedCompletion(input_segment.with_labels(labels), OK, coverage)


# --- orchestration -----------------------------------------------------------


@dataclass(frozen=True)
class CorrectionResult:
    corrected: Transcript
    per_segment_status: tuple[SegmentStatus, ...] = field(default_factory=tuple)

    @property
    def fallbacks(self) -> int:
        return sum(not s.ok for s in self.per_segment_status)


def template_overhead(variant: PromptVariant | str, counter: Callable[[str], int]) -> int:
    head, tail = template_affixes(PromptVariant(variant))
    return counter(head + tail)


def _complete_with_retries(
    client: CompletionClient, prompt: str, params: CompletionParams, retries: int, delay: float
) -> str:
    attempt = 0
    while True:
        try:
            return client.complete(prompt, params)
        except Exception as exc:
            if attempt >= retries:
                raise
            attempt += 1
            logger.warning("completion failed (%s), retry %d/%d", exc, attempt, retries)
            if delay:
                time.sleep(delay * 2 ** (attempt - 1))


def correct_transcript(
    t: Transcript,
    client: CompletionClient,
    cfg: SegmentationConfig = SegmentationConfig(),
    variant: PromptVariant | str = PromptVariant.FINETUNED,
    *,
    params: CompletionParams | None = None,
    retries: int = 2,
    retry_delay: float = 0.0,
    jobs: int = 1,
    min_coverage: float = DEFAULT_MIN_COVERAGE,
) -> CorrectionResult:
    """Correct speaker labels segment by segment; words never change.

    Client failures that survive ``retries`` leave the segment's original
    labels in place with status ``fell_back(client error)``.
    """
    variant = PromptVariant(variant)
    if not t.words:
        return CorrectionResult(t, ())
    params = params or CompletionParams(max_tokens=cfg.token_budget)
    segments = segment_transcript(t, cfg, template_overhead(variant, cfg.token_counter))
    allowed = t.speaker_set

    def run(seg) -> tuple[list[int], SegmentStatus]:
        piece = t.slice(*seg.word_range)
        prompt = build_prompt(seg.text, variant)
        try:
            completion = _complete_with_retries(client, prompt, params, retries, retry_delay)
        except Exception as exc:
            logger.warning("segment %s/%d falls back: %s", t.id, seg.index, exc)
            return piece.speakers, SegmentStatus(False, "client error")
        result = parse_completion(
            piece, completion, cfg=cfg.serialization, min_coverage=min_coverage, allowed_speakers=allowed
        )
        return result.transcript.speakers, result.status

    if jobs > 1 and len(segments) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run, segments))
    else:
        outcomes = [run(seg) for seg in segments]

    labels: list[int] = []
    for seg_labels, _ in outcomes:
        labels.extend(seg_labels)
    corrected = t.with_labels(labels, source=Source.CORRECTED)
    return CorrectionResult(corrected, tuple(status for _, status in outcomes))
