"""WER, cpWER, SA-WER and the diarization deltas.

All rates are exact :class:`fractions.Fraction` values (errors over reference
words). The ``*_counts`` variants return raw error counts so corpus-level
evaluation can pool errors before dividing.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .tpst import edit_distance
from .transcript import Transcript

__all__ = [
    "MAX_SPEAKERS",
    "MetricsReport",
    "speaker_streams",
    "wer",
    "cpwer",
    "sawer",
    "metrics_report",
    "ErrorCounts",
    "error_counts",
]

MAX_SPEAKERS = 6


def speaker_streams(t: Transcript) -> dict[int, list[str]]:
    """Each speaker's words concatenated in transcript order, keyed by id."""
    streams: dict[int, list[str]] = {}
    for w in t.words:
        streams.setdefault(w.speaker, []).append(w.text)
    return dict(sorted(streams.items()))


def wer(reference: Sequence[str], hypothesis: Sequence[str]) -> Fraction:
    if not reference:
        raise ValueError("empty reference")
    return Fraction(edit_distance(reference, hypothesis), len(reference))


def _check(reference: Transcript, hypothesis: Transcript) -> None:
    if not reference.words:
        raise ValueError("empty reference")
    if len(reference.speaker_set) > MAX_SPEAKERS or len(hypothesis.speaker_set) > MAX_SPEAKERS:
        raise ValueError("permutation search too large")


class _CostTable:
    """Pairwise per-speaker edit distances, computed lazily and memoized."""

    def __init__(self, reference: Transcript, hypothesis: Transcript):
        self.ref = speaker_streams(reference)
        self.hyp = speaker_streams(hypothesis)
        self._cache: dict[tuple[int | None, int | None], int] = {}

    def cost(self, r: int | None, h: int | None) -> int:
        key = (r, h)
        if key not in self._cache:
            rw = self.ref[r] if r is not None else []
            hw = self.hyp[h] if h is not None else []
            self._cache[key] = edit_distance(rw, hw)
        return self._cache[key]

    def best_mapping(self, mean: bool = False) -> tuple[object, dict[int, int]]:
        """Exhaustive search over injective hypothesis-to-reference mappings.

        Both sides are padded with ``None`` pseudo-speakers to a common size.
        Returns the minimal score (error count, or mean of per-speaker rates
        when ``mean``) and the mapping restricted to real speakers. The first
        minimum in ``itertools.permutations`` order wins.
        """
        refs: list[int | None] = list(self.ref)
        hyps: list[int | None] = list(self.hyp)
        k = max(len(refs), len(hyps))
        refs += [None] * (k - len(refs))
        hyps += [None] * (k - len(hyps))
        best = None
        best_map: dict[int, int] = {}
        for perm in itertools.permutations(range(k)):
            pairs = [(refs[perm[i]], hyps[i]) for i in range(k)]
            score = self._score(pairs, mean)
            if best is None or score < best:
                best = score
                best_map = {h: r for r, h in pairs if h is not None and r is not None}
        return best, best_map

    def identity_score(self, mean: bool = False) -> object:
        ids = sorted(set(self.ref) | set(self.hyp))
        pairs = [(s if s in self.ref else None, s if s in self.hyp else None) for s in ids]
        return self._score(pairs, mean)

    def _score(self, pairs, mean: bool):
        if not mean:
            return sum(self.cost(r, h) for r, h in pairs)
        total_ref = sum(len(v) for v in self.ref.values())
        rates = []
        stray = 0
        for r, h in pairs:
            if r is None:
                stray += self.cost(r, h)
            else:
                rates.append(Fraction(self.cost(r, h), len(self.ref[r])))
        return sum(rates, Fraction(0)) / len(rates) + Fraction(stray, total_ref)


def cpwer(
    reference: Transcript, hypothesis: Transcript, *, mean: bool = False
) -> tuple[Fraction, dict[int, int]]:
    """Concatenated minimum-permutation WER and the chosen speaker mapping.

    By default per-speaker errors are pooled over all reference words. With
    ``mean=True`` the per-reference-speaker WERs are averaged instead;
    words of hypothesis speakers left without a reference partner are then
    charged as insertions over the total reference word count.
    """
    _check(reference, hypothesis)
    table = _CostTable(reference, hypothesis)
    score, mapping = table.best_mapping(mean)
    if mean:
        return score, mapping  # type: ignore[return-value]
    return Fraction(score, len(reference)), mapping  # type: ignore[arg-type]


def sawer(reference: Transcript, hypothesis: Transcript, *, mean: bool = False) -> Fraction:
    """Speaker-attributed WER under the identity speaker mapping."""
    _check(reference, hypothesis)
    score = _CostTable(reference, hypothesis).identity_score(mean)
    if mean:
        return score  # type: ignore[return-value]
    return Fraction(score, len(reference))  # type: ignore[arg-type]


@dataclass(frozen=True)
class ErrorCounts:
    """Raw error counts for one reference/hypothesis pair."""

    wer_errors: int
    cp_errors: int
    sa_errors: int
    ref_words: int
    permutation: dict[int, int] = field(default_factory=dict)


def error_counts(reference: Transcript, hypothesis: Transcript) -> ErrorCounts:
    _check(reference, hypothesis)
    table = _CostTable(reference, hypothesis)
    cp, mapping = table.best_mapping()
    return ErrorCounts(
        wer_errors=edit_distance(reference.texts, hypothesis.texts),
        cp_errors=cp,  # type: ignore[arg-type]
        sa_errors=table.identity_score(),  # type: ignore[arg-type]
        ref_words=len(reference),
        permutation=mapping,
    )


@dataclass(frozen=True)
class MetricsReport:
    wer: Fraction
    cpwer: Fraction
    sawer: Fraction
    delta_cp: Fraction
    delta_sa: Fraction
    ref_word_count: int
    permutation: dict[int, int] = field(default_factory=dict)

    @classmethod
    def from_rates(
        cls,
        wer: Fraction,
        cpwer: Fraction,
        sawer: Fraction,
        ref_word_count: int,
        permutation: dict[int, int] | None = None,
    ) -> MetricsReport:
        return cls(wer, cpwer, sawer, cpwer - wer, sawer - wer, ref_word_count, permutation or {})

    def as_dict(self) -> dict:
        out = {
            name: float(getattr(self, name))
            for name in ("wer", "cpwer", "sawer", "delta_cp", "delta_sa")
        }
        out["ref_word_count"] = self.ref_word_count
        out["permutation"] = {str(h): r for h, r in sorted(self.permutation.items())}
        out["exact"] = {
            name: str(getattr(self, name))
            for name in ("wer", "cpwer", "sawer", "delta_cp", "delta_sa")
        }
        return out


def metrics_report(
    reference: Transcript, hypothesis: Transcript, *, mean: bool = False
) -> MetricsReport:
    """All five metrics for one pair; WER uses the interleaved word order."""
    if mean:
        w = wer(reference.texts, hypothesis.texts)
        cp, mapping = cpwer(reference, hypothesis, mean=True)
        sa = sawer(reference, hypothesis, mean=True)
        return MetricsReport.from_rates(w, cp, sa, len(reference), mapping)
    c = error_counts(reference, hypothesis)
    n = c.ref_words
    return MetricsReport.from_rates(
        Fraction(c.wer_errors, n), Fraction(c.cp_errors, n), Fraction(c.sa_errors, n), n, c.permutation
    )
