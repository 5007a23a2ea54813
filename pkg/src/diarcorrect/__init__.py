"""Post-hoc correction and scoring of speaker labels in ASR transcripts."""

from .adapters import AsrFormat, count_speakers, ingest
from .correction import CorrectionResult, correct_transcript, parse_completion
from .merge import MergeConfig, ties_merge
from .metrics import MetricsReport, cpwer, metrics_report, sawer, wer
from .prep import ErrorModel, SegmentationConfig, inject_errors, segment_transcript
from .prompts import PromptVariant, build_prompt
from .tpst import align_words, make_oracle, transfer_labels
from .transcript import (
    SerializationConfig,
    Source,
    Transcript,
    Word,
    normalize_text,
    parse_serialized,
    serialize,
)

__version__ = "0.1.0"

__all__ = [
    "AsrFormat",
    "CorrectionResult",
    "ErrorModel",
    "MergeConfig",
    "MetricsReport",
    "PromptVariant",
    "SegmentationConfig",
    "SerializationConfig",
    "Source",
    "Transcript",
    "Word",
    "align_words",
    "build_prompt",
    "correct_transcript",
    "count_speakers",
    "cpwer",
    "ingest",
    "inject_errors",
    "make_oracle",
    "metrics_report",
    "normalize_text",
    "parse_completion",
    "parse_serialized",
    "sawer",
    "segment_transcript",
    "serialize",
    "ties_merge",
    "transfer_labels",
    "wer",
]
