"""Transcript-preserving speaker transfer.

Aligns two word sequences with a unit-cost Levenshtein alignment and copies
speaker labels from a source transcript onto target words, leaving the
target wording untouched.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .transcript import Source, Transcript, Word

__all__ = [
    "Op",
    "AlignmentPath",
    "edit_distance",
    "align_words",
    "transfer_labels",
    "make_oracle",
    "transferred_labels",
]


class Op(str, enum.Enum):
    MATCH = "match"
    SUBSTITUTE = "substitute"
    INSERT = "insert"
    DELETE = "delete"


# backtrace codes stored per DP cell
_DIAG, _DEL, _INS = 0, 1, 2


@dataclass(frozen=True)
class AlignmentPath:
    """Ordered edit operations turning ``src`` into ``tgt``.

    Each entry is ``(op, src_index, tgt_index)``; inserts carry no source
    index and deletes carry no target index.
    """

    ops: tuple[tuple[Op, int | None, int | None], ...]

    @property
    def cost(self) -> int:
        return sum(op is not Op.MATCH for op, _, _ in self.ops)

    def __iter__(self):
        return iter(self.ops)

    def __len__(self) -> int:
        return len(self.ops)


def _encode(a: Sequence[Hashable], b: Sequence[Hashable]) -> tuple[np.ndarray, np.ndarray]:
    vocab: dict = {}
    ea = np.fromiter((vocab.setdefault(x, len(vocab)) for x in a), dtype=np.int64, count=len(a))
    eb = np.fromiter((vocab.setdefault(x, len(vocab)) for x in b), dtype=np.int64, count=len(b))
    return ea, eb


def _next_row(prev: np.ndarray, i: int, mismatch: np.ndarray, ramp: np.ndarray) -> tuple:
    # prev is row i-1; returns row i plus the diagonal / delete candidates
    diag = prev[:-1] + mismatch
    dele = prev[1:] + 1
    best = np.minimum(diag, dele)
    cand = np.empty_like(prev)
    cand[0] = i
    cand[1:] = best
    # left-to-right insertion chain: row[j] = min_k<=j (cand[k] + j - k)
    row = np.minimum.accumulate(cand - ramp) + ramp
    return row, diag, dele


def edit_distance(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    """Unit-cost Levenshtein distance between two token sequences.

    Bit-parallel (Myers/Hyyrö) over Python integers: one column of vertical
    deltas is packed into two bit vectors, so each source token costs a
    handful of big-integer operations.
    """
    if not a:
        return len(b)
    if not b:
        return len(a)
    m = len(b)
    mask = (1 << m) - 1
    high = 1 << (m - 1)
    peq: dict = {}
    for j, tok in enumerate(b):
        peq[tok] = peq.get(tok, 0) | (1 << j)
    pv, mv, score = mask, 0, m
    for tok in a:
        eq = peq.get(tok, 0)
        xv = eq | mv
        xh = ((((eq & pv) + pv) & mask) ^ pv) | eq
        ph = mv | (~(xh | pv) & mask)
        mh = pv & xh
        if ph & high:
            score += 1
        elif mh & high:
            score -= 1
        ph = ((ph << 1) | 1) & mask
        mh = (mh << 1) & mask
        pv = mh | (~(xv | ph) & mask)
        mv = ph & xv
    return score


def align_words(src: Sequence[str], tgt: Sequence[str]) -> AlignmentPath:
    """Minimum edit-distance alignment of ``src`` onto ``tgt``.

    On backtrace ties the diagonal step (match or substitute) wins, then a
    deletion of a source word, then an insertion of a target word.
    """
    n, m = len(src), len(tgt)
    if n == 0 or m == 0:
        ops = [(Op.DELETE, i, None) for i in range(n)] + [(Op.INSERT, None, j) for j in range(m)]
        return AlignmentPath(tuple(ops))

    es, et = _encode(src, tgt)
    ramp = np.arange(m + 1, dtype=np.int64)
    back = np.empty((n + 1, m + 1), dtype=np.uint8)
    back[0, :] = _INS
    back[:, 0] = _DEL
    row = ramp.copy()
    for i in range(1, n + 1):
        row, diag, dele = _next_row(row, i, (et != es[i - 1]).astype(np.int64), ramp)
        inner = row[1:]
        codes = np.where(inner == diag, _DIAG, np.where(inner == dele, _DEL, _INS))
        back[i, 1:] = codes

    ops: list[tuple[Op, int | None, int | None]] = []
    i, j = n, m
    while i > 0 or j > 0:
        code = back[i, j]
        if code == _DIAG:
            i -= 1
            j -= 1
            ops.append((Op.MATCH if es[i] == et[j] else Op.SUBSTITUTE, i, j))
        elif code == _DEL:
            i -= 1
            ops.append((Op.DELETE, i, None))
        else:
            j -= 1
            ops.append((Op.INSERT, None, j))
    ops.reverse()
    return AlignmentPath(tuple(ops))


def transferred_labels(src: Transcript, tgt_words: Sequence[str]) -> tuple[list[int], int]:
    """Labels for ``tgt_words`` plus the number of target words hit by a match."""
    path = align_words(src.texts, tgt_words)
    labels: list[int | None] = [None] * len(tgt_words)
    matched = 0
    for op, si, ti in path:
        if op is Op.MATCH or op is Op.SUBSTITUTE:
            labels[ti] = src.words[si].speaker
            matched += op is Op.MATCH
    # inserted words: nearest preceding assigned label, else nearest following, else 1
    filled: list[int] = []
    last = None
    for lab in labels:
        if lab is not None:
            last = lab
        filled.append(last)  # type: ignore[arg-type]
    nxt = None
    for k in range(len(filled) - 1, -1, -1):
        if labels[k] is not None:
            nxt = labels[k]
        if filled[k] is None:
            filled[k] = nxt if nxt is not None else 1
    return filled, matched


def transfer_labels(src: Transcript, tgt_words: Sequence[str]) -> Transcript:
    """Copy ``src`` speaker labels onto ``tgt_words`` through their alignment.

    The output word texts are exactly ``tgt_words``.
    """
    if not tgt_words:
        return Transcript(id=src.id, words=(), source=src.source)
    if not src.words:
        raise ValueError("source transcript is empty")
    labels, _ = transferred_labels(src, tgt_words)
    words = tuple(Word(text, spk) for text, spk in zip(tgt_words, labels))
    return Transcript(id=src.id, words=words, source=src.source)


def make_oracle(reference: Transcript, asr: Transcript) -> Transcript:
    """ASR wording (and timestamps) carrying the reference speaker labels."""
    if not reference.words or not asr.words:
        raise ValueError("reference and ASR transcripts must be non-empty")
    labels, _ = transferred_labels(reference, asr.texts)
    return asr.with_labels(labels, source=Source.SYNTHETIC)
