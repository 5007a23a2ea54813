"""Byte-exact prompt templates for the correction models."""

from __future__ import annotations

import enum

__all__ = [
    "PromptVariant",
    "INSTRUCTION",
    "ZERO_SHOT_PRIMER",
    "build_prompt",
    "strip_template",
    "template_affixes",
]

INSTRUCTION = (
    "In the speaker diarization transcript below, some words are potentially misplaced. "
    "Please correct those words and move them to the right speaker. Directly show the "
    "corrected transcript without explaining what changes were made or why you made those "
    "changes:"
)

ZERO_SHOT_PRIMER = "Here is the corrected transcript with the words moved to the right speaker:"

DLM_ARROW = "-->"


class PromptVariant(str, enum.Enum):
    FINETUNED = "finetuned"
    ZERO_SHOT_INSTRUCT = "zero_shot_instruct"
    DIARIZATION_LM = "diarization_lm"

    @classmethod
    def parse(cls, name: str) -> PromptVariant:
        aliases = {"zero-shot": cls.ZERO_SHOT_INSTRUCT, "dlm": cls.DIARIZATION_LM}
        return aliases.get(name) or cls(name.replace("-", "_"))


def template_affixes(variant: PromptVariant, arrow: str = DLM_ARROW) -> tuple[str, str]:
    if variant is PromptVariant.FINETUNED:
        return INSTRUCTION + "\n\n", ""
    if variant is PromptVariant.ZERO_SHOT_INSTRUCT:
        return "<s>[INST]\n" + INSTRUCTION + "\n\n", " [/INST]\n\n" + ZERO_SHOT_PRIMER
    return "", f" {arrow} "


def build_prompt(
    segment_text: str, variant: PromptVariant | str = PromptVariant.FINETUNED, *, arrow: str = DLM_ARROW
) -> str:
    """Wrap a serialized transcript segment in the chosen template."""
    if not segment_text:
        raise ValueError("empty segment text")
    head, tail = template_affixes(PromptVariant(variant), arrow)
    return head + segment_text + tail


def strip_template(prompt: str, variant: PromptVariant | str | None = None, *, arrow: str = DLM_ARROW) -> str:
    """Recover the transcript block from a rendered prompt.

    With ``variant=None`` every known template is tried; a prompt matching
    none is returned unchanged.
    """
    variants = [PromptVariant(variant)] if variant is not None else list(PromptVariant)
    # try the most specific wrappers first
    variants.sort(key=lambda v: -sum(map(len, template_affixes(v, arrow))))
    for v in variants:
        head, tail = template_affixes(v, arrow)
        if prompt.startswith(head) and prompt.endswith(tail) and len(prompt) > len(head) + len(tail):
            return prompt[len(head) : len(prompt) - len(tail)]
    return prompt
