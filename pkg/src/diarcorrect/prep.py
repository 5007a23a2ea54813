"""Dataset preprocessing.

Speaker-count and repeated-sequence filters, trimming ASR output to the
reference span, token-budgeted segmentation, prompt/completion pair
construction and seeded label corruption for synthetic experiments.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .adapters import count_speakers
from .prompts import PromptVariant, build_prompt
from .transcript import (
    DEFAULT_SERIALIZATION,
    SerializationConfig,
    Source,
    Transcript,
    Word,
    serialize,
)

__all__ = [
    "default_token_counter",
    "SegmentationConfig",
    "Segment",
    "TrainingPair",
    "ErrorModel",
    "FilterDecision",
    "Repeat",
    "StageCounts",
    "filter_speaker_count",
    "detect_repeats",
    "filter_repeats",
    "trim_to_reference",
    "segment_transcript",
    "build_training_pairs",
    "inject_errors",
    "synthetic_transcript",
    "synthetic_corpus",
]

TokenCounter = Callable[[str], int]


def default_token_counter(text: str) -> int:
    """Approximate subword count: ceil(1.3 x whitespace tokens)."""
    return math.ceil(len(text.split()) * 13 / 10)


@dataclass(frozen=True)
class SegmentationConfig:
    token_budget: int = 4096
    pair_budget: int = 8192
    token_counter: TokenCounter = default_token_counter
    serialization: SerializationConfig = DEFAULT_SERIALIZATION

    def __post_init__(self) -> None:
        if self.token_budget < 1 or self.pair_budget < 1:
            raise ValueError("token budgets must be positive")


@dataclass(frozen=True)
class Segment:
    parent_id: str
    index: int
    word_range: tuple[int, int]
    text: str

    def as_dict(self) -> dict:
        return {
            "parent_id": self.parent_id,
            "index": self.index,
            "start": self.word_range[0],
            "end": self.word_range[1],
            "text": self.text,
        }


@dataclass(frozen=True)
class TrainingPair:
    prompt: str
    completion: str
    parent_id: str
    index: int
    word_range: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class FilterDecision:
    keep: bool
    reason: str = ""
    stage: str = ""


@dataclass(frozen=True)
class Repeat:
    """A run of one n-gram repeated back to back ``count`` times at ``start``."""

    start: int
    ngram: tuple[str, ...]
    count: int


@dataclass
class StageCounts:
    """Kept/dropped tallies per pipeline stage; merge with ``+``."""

    kept: Counter = field(default_factory=Counter)
    dropped: Counter = field(default_factory=Counter)

    def record(self, stage: str, decision: FilterDecision) -> None:
        if decision.keep:
            self.kept[stage] += 1
        else:
            self.dropped[(stage, decision.reason)] += 1

    def __add__(self, other: StageCounts) -> StageCounts:
        return StageCounts(self.kept + other.kept, self.dropped + other.dropped)

    def summary(self) -> dict:
        out: dict = {}
        for stage, n in self.kept.items():
            out.setdefault(stage, {"kept": 0, "dropped": {}})["kept"] = n
        for (stage, reason), n in self.dropped.items():
            out.setdefault(stage, {"kept": 0, "dropped": {}})["dropped"][reason] = n
        return out


# --- filters -----------------------------------------------------------------


def filter_speaker_count(t: Transcript) -> FilterDecision:
    n = count_speakers(t) if t.words else 0
    if n == 2:
        return FilterDecision(True, stage="speakers")
    if n < 2:
        return FilterDecision(False, "single speaker", "speakers")
    return FilterDecision(False, "more than two speakers", "speakers")


def detect_repeats(t: Transcript | Sequence[str], max_ngram: int = 5, threshold: int = 10) -> Repeat | None:
    """First n-gram (shortest n first) repeated back to back more than ``threshold`` times.

    ``eq[i]`` marks positions where word ``i`` equals word ``i + n``; a run of
    ``L`` such positions starting at ``i`` means the n-gram at ``i`` occurs
    ``L // n + 1`` times in a row.
    """
    if max_ngram < 1 or threshold < 1:
        raise ValueError("max_ngram and threshold must be >= 1")
    words = t.texts if isinstance(t, Transcript) else list(t)
    for n in range(1, max_ngram + 1):
        run = 0
        for i in range(len(words) - n - 1, -1, -1):
            run = run + 1 if words[i] == words[i + n] else 0
            reps = run // n + 1
            if reps > threshold:
                # walk back to the start of this run for a stable report
                j = i
                while j - 1 >= 0 and j - 1 + n < len(words) and words[j - 1] == words[j - 1 + n]:
                    j -= 1
                total = 1
                while j + total * n + n <= len(words) and words[j + total * n : j + total * n + n] == words[j : j + n]:
                    total += 1
                return Repeat(j, tuple(words[j : j + n]), total)
    return None


def filter_repeats(t: Transcript, max_ngram: int = 5, threshold: int = 10) -> FilterDecision:
    hit = detect_repeats(t, max_ngram, threshold)
    if hit is None:
        return FilterDecision(True, stage="repeats")
    return FilterDecision(False, f"repeated sequence {' '.join(hit.ngram)!r} x{hit.count}", "repeats")


def trim_to_reference(asr: Transcript, reference: Transcript) -> Transcript:
    """Drop ASR words starting after the reference's last end time."""
    if not asr.has_timestamps or not reference.has_timestamps:
        raise ValueError("timestamps required for trimming")
    cutoff = max(w.end_time for w in reference.words)  # type: ignore[type-var]
    kept = tuple(w for w in asr.words if w.start_time <= cutoff)  # type: ignore[operator]
    if len(kept) == len(asr.words):
        return asr
    return Transcript(id=asr.id, words=kept, source=asr.source)


# --- segmentation ------------------------------------------------------------


def _greedy_ranges(t: Transcript, fits: Callable[[int, int], bool]) -> list[tuple[int, int]]:
    """Greedy cover of ``t`` by ranges satisfying ``fits``.

    Each range extends over as many whole turns as fit; a turn that cannot fit
    on its own is split at the last word boundary that fits. ``fits`` must be
    monotone (a range that fits stays fitting when shrunk from the right),
    which lets both searches bisect.
    """
    n = len(t)
    bounds = [end for _, end in t.turns()]
    ranges: list[tuple[int, int]] = []
    start = 0
    while start < n:
        cands = [b for b in bounds if b > start]
        lo, hi = 0, len(cands) - 1
        best = -1
        while lo <= hi:
            mid = (lo + hi) // 2
            if fits(start, cands[mid]):
                best = mid
                lo = mid + 1
            else:
                hi = mid - 1
        if best >= 0:
            end = cands[best]
        else:
            lo, hi, end = start + 1, cands[0] - 1, start
            while lo <= hi:
                mid = (lo + hi) // 2
                if fits(start, mid):
                    end = mid
                    lo = mid + 1
                else:
                    hi = mid - 1
            if end == start:
                raise ValueError(f"token budget cannot hold the word at index {start}")
        ranges.append((start, end))
        start = end
    return ranges


def segment_transcript(
    t: Transcript, cfg: SegmentationConfig = SegmentationConfig(), template_overhead: int = 0
) -> list[Segment]:
    """Split ``t`` into serialized chunks of at most ``token_budget`` tokens.

    A chunk's cost is the token count of its serialization plus
    ``template_overhead``.
    """
    if not t.words:
        return []
    count, ser = cfg.token_counter, cfg.serialization
    if template_overhead >= cfg.token_budget:
        raise ValueError("template overhead exceeds the token budget")

    def fits(s: int, e: int) -> bool:
        return count(serialize(t.slice(s, e), ser)) + template_overhead <= cfg.token_budget

    return [
        Segment(t.id, k, (s, e), serialize(t.slice(s, e), ser))
        for k, (s, e) in enumerate(_greedy_ranges(t, fits))
    ]


def build_training_pairs(
    asr: Transcript, oracle: Transcript, cfg: SegmentationConfig = SegmentationConfig()
) -> list[TrainingPair]:
    """Fine-tuning pairs: ASR segment in the prompt, oracle segment as completion.

    Ranges are chosen so each prompt fits ``token_budget`` and each
    prompt+completion pair fits ``pair_budget``.
    """
    if asr.texts != oracle.texts:
        raise ValueError("oracle/asr wording mismatch")
    if not asr.words:
        return []
    count, ser = cfg.token_counter, cfg.serialization

    def render(s: int, e: int) -> tuple[str, str]:
        prompt = build_prompt(serialize(asr.slice(s, e), ser), PromptVariant.FINETUNED)
        return prompt, serialize(oracle.slice(s, e), ser)

    def fits(s: int, e: int) -> bool:
        prompt, completion = render(s, e)
        p = count(prompt)
        return p <= cfg.token_budget and p + count(completion) <= cfg.pair_budget

    pairs = []
    for k, (s, e) in enumerate(_greedy_ranges(asr, fits)):
        prompt, completion = render(s, e)
        pairs.append(TrainingPair(prompt, completion, asr.id, k, (s, e)))
    return pairs


# --- synthetic corruption ----------------------------------------------------


@dataclass(frozen=True)
class ErrorModel:
    """Seeded speaker-label corruption.

    Boundary shifts move up to ``boundary_shift_span`` trailing words of a
    turn onto the next turn's speaker; phrase flips relabel a phrase strictly
    inside a turn. Every turn keeps at least its first word, so the speaker
    alphabet survives.
    """

    seed: int = 0
    boundary_shift_rate: float = 0.3
    boundary_shift_span: int = 3
    phrase_flip_rate: float = 0.2
    phrase_len: tuple[int, int] = (1, 4)

    def __post_init__(self) -> None:
        for rate in (self.boundary_shift_rate, self.phrase_flip_rate):
            if not 0.0 <= rate <= 1.0:
                raise ValueError("rates must lie in [0, 1]")
        lo, hi = self.phrase_len
        if self.boundary_shift_span < 1 or lo < 1 or hi < lo:
            raise ValueError("spans must be >= 1")


def inject_errors(t: Transcript, model: ErrorModel) -> Transcript:
    speakers = sorted(t.speaker_set)
    if len(speakers) != 2:
        raise ValueError("label corruption needs a two-speaker transcript")
    other = {speakers[0]: speakers[1], speakers[1]: speakers[0]}
    rng = random.Random(model.seed)
    labels = t.speakers
    turns = t.turns()
    lo, hi = model.phrase_len

    for s, e in turns:
        if rng.random() >= model.phrase_flip_rate:
            continue
        room = e - s - 2
        if room < lo:
            continue
        length = rng.randint(lo, min(hi, room))
        at = rng.randint(s + 1, e - 1 - length)
        for i in range(at, at + length):
            labels[i] = other[t.words[i].speaker]

    for k in range(len(turns) - 1):
        if rng.random() >= model.boundary_shift_rate:
            continue
        s, e = turns[k]
        moved = min(rng.randint(1, model.boundary_shift_span), e - s - 1)
        nxt = t.words[turns[k + 1][0]].speaker
        for i in range(e - moved, e):
            labels[i] = nxt

    return t.with_labels(labels)


_SYLLABLES = (
    "ka", "lo", "mi", "ra", "ten", "su", "vo", "ne", "pi", "da", "gor", "shu", "ba", "fel",
    "qui", "zan", "to", "wem", "ly", "ix",
)


def _vocabulary(rng: random.Random, size: int) -> list[str]:
    words: set[str] = set()
    while len(words) < size:
        words.add("".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(1, 3))))
    return sorted(words)


def synthetic_transcript(
    rng: random.Random,
    id: str,
    n_turns: tuple[int, int] = (8, 40),
    turn_len: tuple[int, int] = (1, 15),
    vocabulary: Sequence[str] | None = None,
) -> Transcript:
    """Random two-speaker conversation with alternating turns and timestamps."""
    vocab = list(vocabulary) if vocabulary is not None else _vocabulary(rng, 400)
    words: list[Word] = []
    clock = 0.0
    speaker = rng.choice((1, 2))
    for _ in range(rng.randint(*n_turns)):
        for _ in range(rng.randint(*turn_len)):
            dur = round(rng.uniform(0.15, 0.6), 3)
            words.append(Word(rng.choice(vocab), speaker, round(clock, 3), round(clock + dur, 3)))
            clock += dur + rng.uniform(0.0, 0.1)
        clock += rng.uniform(0.2, 1.0)
        speaker = 3 - speaker
    return Transcript(id=id, words=tuple(words), source=Source.SYNTHETIC)


def synthetic_corpus(n: int, seed: int, **kwargs) -> list[Transcript]:
    if n < 1:
        raise ValueError("corpus size must be >= 1")
    rng = random.Random(seed)
    vocab = _vocabulary(rng, 2000)
    return [synthetic_transcript(rng, f"synth-{i:04d}", vocabulary=vocab, **kwargs) for i in range(n)]

