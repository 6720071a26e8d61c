"""Instruction prompt rendering and conditioning-query construction.

Templates are plain-text assets with four placeholders: ``{{CODEBOOK}}``,
``{{EXEMPLARS}}``, ``{{DIRECTION}}``, ``{{MESSAGE}}``. Rendering is pure
and byte-deterministic; chat-role wrapping is left to the inference
server.
"""

from __future__ import annotations

import enum
import importlib.resources
from dataclasses import dataclass

from .codebook import DIRECTION_N, DIRECTION_Y, NO_SUBCODE, Codebook
from .corpus import Message

PLACEHOLDERS = ("{{CODEBOOK}}", "{{EXEMPLARS}}", "{{DIRECTION}}", "{{MESSAGE}}")

_DIRECTION_LINES = {
    DIRECTION_Y: 'TO_PAT_YN: Y (Provider speaking to patient)',
    DIRECTION_N: 'TO_PAT_YN: N (Patient speaking to provider)',
}


class TemplateKind(enum.Enum):
    BASELINE = "baseline"
    ENGINEERED = "engineered"


@dataclass(frozen=True)
class PromptTemplate:
    kind: TemplateKind
    body: str

    def __post_init__(self):
        missing = [p for p in PLACEHOLDERS if p not in self.body]
        if missing:
            raise ValueError(f"template missing placeholders: {missing}")


@dataclass(frozen=True)
class Exemplar:
    """A demonstration: an input message plus its gold result document."""

    message: Message
    gold: str  # serialized {"results": [...]} block


def load_template(kind: TemplateKind | str) -> PromptTemplate:
    """Load one of the two shipped templates."""
    kind = TemplateKind(kind) if isinstance(kind, str) else kind
    ref = importlib.resources.files("pvminer.templates") / f"{kind.value}.txt"
    return PromptTemplate(kind=kind, body=ref.read_text(encoding="utf-8"))


def render_codebook_block(cb: Codebook) -> str:
    """Emit the Code/Sub-code definition block in the documented shape.

    One ``CODE: definition`` line per Code followed by ``|- SUBCODE:
    definition`` children, or the explicit no-Sub-code line.
    """
    lines: list[str] = []
    for code, definition in cb.codes.items():
        lines.append(f"{code}: {definition}")
        for sub in cb.subcodes_for(code):
            if sub == NO_SUBCODE:
                lines.append("|- None: No sub-codes are defined for this Code.")
            else:
                lines.append(f"|- {sub}: {cb.subcodes[sub]}")
        lines.append("")
    return "\n".join(lines).rstrip("\n")


def direction_line(direction: str) -> str:
    return _DIRECTION_LINES[direction]


def render_exemplar_block(shots: tuple[Exemplar, ...] | list[Exemplar]) -> str:
    """Render few-shot demonstrations, each as an input block plus its gold result."""
    if not shots:
        return ""
    parts = []
    for shot in shots:
        parts.append(
            "EXAMPLE INPUT:\n"
            f"{direction_line(shot.message.direction)}\n"
            "\n"
            "Context:\n"
            f"{shot.message.text}\n"
            "\n"
            "EXAMPLE OUTPUT:\n"
            f"{shot.gold}\n"
        )
    return "\n" + "\n".join(parts)


def render_prompt(
    template: PromptTemplate,
    cb: Codebook,
    message: Message,
    shots: tuple[Exemplar, ...] | list[Exemplar] = (),
) -> str:
    """Substitute all placeholders; the output ends with the message block."""
    text = template.body
    text = text.replace("{{CODEBOOK}}", render_codebook_block(cb))
    text = text.replace("{{EXEMPLARS}}", render_exemplar_block(tuple(shots)))
    text = text.replace("{{DIRECTION}}", direction_line(message.direction))
    text = text.replace("{{MESSAGE}}", message.text)
    return text.rstrip("\n")


_INPUT_BLOCK = "INPUT:\n{{DIRECTION}}\n\nContext:\n{{MESSAGE}}"


def render_instruction(
    template: PromptTemplate,
    cb: Codebook,
    shots: tuple[Exemplar, ...] | list[Exemplar] = (),
) -> str:
    """Render the template without its trailing input block.

    This is the instruction part of an SFT conditioning query; the query
    itself appends the raw message text and direction.
    """
    body = template.body.rstrip("\n")
    if body.endswith(_INPUT_BLOCK):
        body = body[: -len(_INPUT_BLOCK)].rstrip("\n")
    text = body.replace("{{CODEBOOK}}", render_codebook_block(cb))
    text = text.replace("{{EXEMPLARS}}", render_exemplar_block(tuple(shots)))
    return text.rstrip("\n")


def build_sft_query(instruction: str, message: Message) -> str:
    """Conditioning query: instruction, message text, and direction joined by newlines."""
    return f"{instruction}\n{message.text}\n{message.direction}"
