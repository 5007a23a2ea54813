"""Corpus evaluation and table rendering.

Corpus metrics pool edit errors and reference word counts over all files
before dividing (``per_file_mean=True`` averages per-file rates instead).
Rendered values are percentages with at most two decimals and trailing zeros
dropped (``0.5``, ``2.5``, ``22.04``); relative changes against the baseline
are whole percents rounded half away from zero, signed (``-46%``, ``+12%``).
"""

from __future__ import annotations

import csv
import io
import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

from .correction import (
    CompletionClient,
    EchoClient,
    OracleClient,
    correct_transcript,
)
from .metrics import error_counts
from .prep import ErrorModel, SegmentationConfig, inject_errors, synthetic_corpus
from .prompts import PromptVariant
from .tpst import make_oracle
from .transcript import Transcript

__all__ = [
    "Cell",
    "EvaluationRow",
    "CorpusAccumulator",
    "EvalItem",
    "run_evaluation",
    "run_synthetic_experiment",
    "format_value",
    "percent_change",
    "format_change",
    "render_baseline_table",
    "render_comparison_table",
    "render_csv",
    "results_json",
    "ASR_LABELS",
]

ASR_LABELS = {
    "aws": "AWS",
    "azure": "Azure",
    "whisperx": "WhisperX",
    "gcp": "GCP",
    "synthetic": "Synthetic",
}

Corrector = Callable[[Transcript], Transcript]


@dataclass(frozen=True)
class Cell:
    """Metrics of one system on one ASR's transcripts, as fractions."""

    delta_cp: Fraction
    delta_sa: Fraction
    wer: Fraction | None = None


@dataclass(frozen=True)
class EvaluationRow:
    system_name: str
    cells: Mapping[str, Cell]
    baseline: str | None = None


@dataclass(frozen=True)
class EvalItem:
    reference: Transcript
    hypothesis: Transcript


@dataclass
class CorpusAccumulator:
    """Pools per-file error counts; ``+`` merges two accumulators."""

    wer_errors: int = 0
    cp_errors: int = 0
    sa_errors: int = 0
    ref_words: int = 0
    files: int = 0
    rate_sums: list[Fraction] = field(default_factory=lambda: [Fraction(0)] * 3)

    def add(self, reference: Transcript, hypothesis: Transcript) -> None:
        c = error_counts(reference, hypothesis)
        self.wer_errors += c.wer_errors
        self.cp_errors += c.cp_errors
        self.sa_errors += c.sa_errors
        self.ref_words += c.ref_words
        self.files += 1
        n = c.ref_words
        self.rate_sums = [
            self.rate_sums[0] + Fraction(c.wer_errors, n),
            self.rate_sums[1] + Fraction(c.cp_errors, n),
            self.rate_sums[2] + Fraction(c.sa_errors, n),
        ]

    def __add__(self, other: CorpusAccumulator) -> CorpusAccumulator:
        return CorpusAccumulator(
            self.wer_errors + other.wer_errors,
            self.cp_errors + other.cp_errors,
            self.sa_errors + other.sa_errors,
            self.ref_words + other.ref_words,
            self.files + other.files,
            [a + b for a, b in zip(self.rate_sums, other.rate_sums)],
        )

    def rates(self, per_file_mean: bool = False) -> tuple[Fraction, Fraction, Fraction]:
        if not self.files:
            raise ValueError("empty corpus")
        if per_file_mean:
            w, cp, sa = (s / self.files for s in self.rate_sums)
        else:
            n = self.ref_words
            w, cp, sa = (Fraction(self.wer_errors, n), Fraction(self.cp_errors, n), Fraction(self.sa_errors, n))
        return w, cp, sa

    def cell(self, per_file_mean: bool = False) -> Cell:
        w, cp, sa = self.rates(per_file_mean)
        return Cell(cp - w, sa - w, w)


def _accumulate(pairs: Sequence[tuple[Transcript, Transcript]], jobs: int) -> CorpusAccumulator:
    def one(pair) -> CorpusAccumulator:
        acc = CorpusAccumulator()
        acc.add(*pair)
        return acc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(one, pairs))
    else:
        parts = [one(p) for p in pairs]
    total = CorpusAccumulator()
    for part in parts:
        total = total + part
    return total


def run_evaluation(
    corpus: Mapping[str, Sequence[EvalItem]],
    systems: Mapping[str, Corrector] | None = None,
    *,
    baseline_name: str = "Baseline",
    per_file_mean: bool = False,
    jobs: int = 1,
) -> list[EvaluationRow]:
    """Baseline row plus one row per system, columns keyed by ASR name.

    ``corpus`` maps an ASR name to its (reference, hypothesis) items;
    each system maps a hypothesis to its corrected transcript.
    """
    if not corpus or not any(corpus.values()):
        raise ValueError("empty corpus")
    systems = systems or {}
    baseline_cells = {}
    system_cells: dict[str, dict[str, Cell]] = {name: {} for name in systems}
    for asr, items in corpus.items():
        if not items:
            raise ValueError(f"no transcripts for {asr}")
        baseline_cells[asr] = _accumulate(
            [(it.reference, it.hypothesis) for it in items], jobs
        ).cell(per_file_mean)
        for name, corrector in systems.items():
            pairs = [(it.reference, corrector(it.hypothesis)) for it in items]
            system_cells[name][asr] = _accumulate(pairs, jobs).cell(per_file_mean)
    rows = [EvaluationRow(baseline_name, baseline_cells)]
    rows += [EvaluationRow(name, system_cells[name], baseline_name) for name in systems]
    return rows


def run_synthetic_experiment(
    n: int,
    seed: int,
    error_model: ErrorModel,
    client: str | CompletionClient = "oracle",
    *,
    seg_cfg: SegmentationConfig = SegmentationConfig(),
    variant: PromptVariant = PromptVariant.FINETUNED,
    system_name: str | None = None,
    jobs: int = 1,
) -> list[EvaluationRow]:
    """Generate, corrupt, correct and score ``n`` random two-speaker transcripts.

    ``client`` is ``"oracle"``, ``"echo"`` or any completion client. The
    corruption seed for transcript ``i`` is derived from ``error_model.seed``
    and ``i``, so runs are reproducible.
    """
    references = synthetic_corpus(n, seed)
    rng = random.Random(error_model.seed)
    corrupted = []
    for ref in references:
        model = ErrorModel(
            seed=rng.randrange(2**32),
            boundary_shift_rate=error_model.boundary_shift_rate,
            boundary_shift_span=error_model.boundary_shift_span,
            phrase_flip_rate=error_model.phrase_flip_rate,
            phrase_len=error_model.phrase_len,
        )
        corrupted.append(inject_errors(ref, model))

    if client == "oracle":
        completion_client: CompletionClient = OracleClient(
            [make_oracle(r, h) for r, h in zip(references, corrupted)], variant
        )
    elif client == "echo":
        completion_client = EchoClient(variant)
    elif isinstance(client, str):
        raise ValueError(f"unknown client {client!r}")
    else:
        completion_client = client
    name = system_name or (f"{client} mock" if isinstance(client, str) else "Corrected")

    def corrector(t: Transcript) -> Transcript:
        return correct_transcript(t, completion_client, seg_cfg, variant).corrected

    items = [EvalItem(r, h) for r, h in zip(references, corrupted)]
    return run_evaluation({"synthetic": items}, {name: corrector}, jobs=jobs)


# --- rendering -----------------------------------------------------------------


def _round_half_away(x: Fraction, digits: int = 0) -> Fraction:
    scale = 10**digits
    scaled = abs(x) * scale
    q = (scaled.numerator * 2 + scaled.denominator) // (scaled.denominator * 2)
    return Fraction(q if x >= 0 else -q, scale)


def format_value(rate: Fraction | float) -> str:
    """Render a rate as a percentage: Fraction(93, 10000) -> '0.93'."""
    pct = _round_half_away(Fraction(rate) * 100, 2)
    cents = int(abs(pct) * 100)
    text = f"{cents // 100}.{cents % 100:02d}".rstrip("0").rstrip(".")
    return ("-" if pct < 0 else "") + text


def percent_change(new: Fraction, old: Fraction) -> Fraction | None:
    if old == 0:
        return None if new != 0 else Fraction(0)
    return (Fraction(new) - Fraction(old)) / Fraction(old) * 100


def format_change(new: Fraction, old: Fraction) -> str:
    change = percent_change(new, old)
    if change is None:
        return "n/a"
    whole = _round_half_away(change)
    sign = "-" if change < 0 else "+"
    return f"{sign}{abs(whole.numerator)}%"


def _asr_order(rows: Sequence[EvaluationRow]) -> list[str]:
    seen: list[str] = []
    for row in rows:
        for asr in row.cells:
            if asr not in seen:
                seen.append(asr)
    known = [a for a in ASR_LABELS if a in seen]
    return known + [a for a in seen if a not in ASR_LABELS]


def _label(asr: str) -> str:
    return ASR_LABELS.get(asr, asr)


def _markdown(header: list[str], body: list[list[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join(["---"] * len(header)) + "|"]
    lines += ["| " + " | ".join(r) + " |" for r in body]
    return "\n".join(lines) + "\n"


def _baseline_grid(rows: Sequence[EvaluationRow]) -> tuple[list[str], list[list[str]]]:
    asrs = _asr_order(rows)
    header = [""]
    for asr in asrs:
        header += [f"{_label(asr)} deltaCP", f"{_label(asr)} deltaSA", f"{_label(asr)} WER"]
    body = []
    for row in rows:
        cells = [row.system_name]
        for asr in asrs:
            c = row.cells.get(asr)
            if c is None:
                cells += ["", "", ""]
            else:
                cells += [format_value(c.delta_cp), format_value(c.delta_sa), format_value(c.wer) if c.wer is not None else "-"]
        body.append(cells)
    return header, body


def _comparison_grid(rows: Sequence[EvaluationRow]) -> tuple[list[str], list[list[str]]]:
    asrs = _asr_order(rows)
    by_name = {r.system_name: r for r in rows}
    header = [""]
    for asr in asrs:
        header += [f"{_label(asr)} deltaCP", "Δ", f"{_label(asr)} deltaSA", "Δ"]
    body = []
    for row in rows:
        base = by_name.get(row.baseline) if row.baseline else None
        cells = [row.system_name]
        for asr in asrs:
            c = row.cells.get(asr)
            if c is None:
                cells += ["", "", "", ""]
                continue
            b = base.cells.get(asr) if base else None
            cells += [
                format_value(c.delta_cp),
                format_change(c.delta_cp, b.delta_cp) if b else "",
                format_value(c.delta_sa),
                format_change(c.delta_sa, b.delta_sa) if b else "",
            ]
        body.append(cells)
    return header, body


def render_baseline_table(rows: Sequence[EvaluationRow]) -> str:
    """Rows of deltaCP / deltaSA / WER per ASR (one row per dataset or system)."""
    return _markdown(*_baseline_grid(rows))


def render_comparison_table(rows: Sequence[EvaluationRow]) -> str:
    """Value and relative change against the baseline row, per ASR."""
    return _markdown(*_comparison_grid(rows))


def render_csv(rows: Sequence[EvaluationRow], layout: str = "comparison") -> str:
    header, body = (_comparison_grid if layout == "comparison" else _baseline_grid)(rows)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(body)
    return buf.getvalue()


def results_json(rows: Iterable[EvaluationRow]) -> str:
    doc = []
    for row in rows:
        cells = {}
        for asr, c in row.cells.items():
            cells[asr] = {
                "delta_cp": float(c.delta_cp),
                "delta_sa": float(c.delta_sa),
                "wer": None if c.wer is None else float(c.wer),
                "exact": {
                    "delta_cp": str(c.delta_cp),
                    "delta_sa": str(c.delta_sa),
                    "wer": None if c.wer is None else str(c.wer),
                },
            }
        doc.append({"system": row.system_name, "baseline": row.baseline, "cells": cells})
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
