from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Sequence

from ..corpus import InstructionSample
from ..property_model import PropertyClass


class TemplateError(ValueError):
    pass


ENVELOPE_KEYS = ("temperature", "power", "frequency", "design_type", "heterostructure", "working_mode")

DEFAULT_INSTRUCTION = (
    "Extract the quantum cascade laser properties (working temperature, optical power, "
    "lasing frequency, design type, heterostructure materials and working mode) from the text."
)

PROPERTY_INSTRUCTIONS = {
    PropertyClass.POWER: "Extract the laser optical power from the text.",
    PropertyClass.TEMPERATURE: "Extract the working temperature of the laser from the text.",
    PropertyClass.DESIGN_TYPE: "Extract the laser design type from the text.",
    PropertyClass.FREQUENCY: "Extract the lasing frequency from the text.",
    PropertyClass.HETEROSTRUCTURE: "Extract the heterostructure material composition from the text.",
}


@dataclass(frozen=True)
class PromptTemplate:
    preamble: str
    example_block: str
    query_block: str
    output_spec: str

    def __post_init__(self):
        for slot in ("{instruction}", "{sentence}", "{extraction}"):
            if self.example_block.count(slot) != 1:
                raise TemplateError(f"example block must contain {slot} exactly once")
        for slot in ("{instruction}", "{sentence}"):
            if self.query_block.count(slot) != 1:
                raise TemplateError(f"query block must contain {slot} exactly once")
        if "{extraction}" in self.query_block:
            raise TemplateError("query block must not contain {extraction}")


DEFAULT_TEMPLATE = PromptTemplate(
    preamble=(
        "You are an expert in quantum cascade lasers (QCL) extracting device properties from "
        "scientific text.\n"
        "Only report values that appear in the input text. Always give a value together with "
        "its unit. When a property has several values, report the maximum operating value; "
        "for a range, report its upper bound. Write null for a property that is not mentioned.\n"
    ),
    example_block=(
        "### Example\n"
        "Instruction: {instruction}\n"
        "Text: {sentence}\n"
        "Extraction: {extraction}\n"
    ),
    query_block=(
        "### Task\n"
        "Instruction: {instruction}\n"
        "Text: {sentence}\n"
    ),
    output_spec=(
        "Answer with a single JSON object and nothing else, using exactly these keys: "
        '{"temperature": string|null, "power": string|null, "frequency": string|null, '
        '"design_type": string|null, "heterostructure": string|null, "working_mode": string|null}\n'
        "Extraction:"
    ),
)


@dataclass(frozen=True)
class GeneratedPrompt:
    text: str
    example_ids: tuple[str, ...]
    k: int
    instruction: str
    sentence: str
    target: PropertyClass | None = None

    @property
    def ref(self) -> str:
        return "p-" + hashlib.sha256(self.text.encode("utf-8")).hexdigest()[:16]


def example_extraction(sample: InstructionSample) -> str:
    env = {key: None for key in ENVELOPE_KEYS}
    env.update({k: v for k, v in sample.expected.to_envelope().items() if v is not None})
    for key, text in sample.expected.raw.items():
        if key in env:
            env[key] = text
    return json.dumps(env, ensure_ascii=False)


def _fill(block: str, **slots: str) -> str:
    # single pass so slot values containing "{sentence}" etc. are left alone
    out = []
    rest = block
    while rest:
        positions = [(rest.find("{" + name + "}"), name) for name in slots if "{" + name + "}" in rest]
        if not positions:
            out.append(rest)
            break
        pos, name = min(positions)
        out.append(rest[:pos])
        out.append(slots[name])
        rest = rest[pos + len(name) + 2 :]
    return "".join(out)


def build_prompt(
    template: PromptTemplate,
    instruction: str,
    sentence: str,
    examples: Sequence[InstructionSample],
    target: PropertyClass | None = None,
) -> GeneratedPrompt:
    """Preamble, then the examples in rank order, then the query and output spec."""
    if not instruction.strip():
        raise ValueError("instruction is empty")
    if not sentence.strip():
        raise ValueError("sentence is empty")
    parts = [template.preamble]
    for ex in examples:
        parts.append(
            _fill(
                template.example_block,
                instruction=ex.instruction,
                sentence=ex.sentence,
                extraction=example_extraction(ex),
            )
        )
    parts.append(_fill(template.query_block, instruction=instruction, sentence=sentence))
    parts.append(template.output_spec)
    return GeneratedPrompt(
        text="\n".join(parts),
        example_ids=tuple(ex.sample_id for ex in examples),
        k=len(examples),
        instruction=instruction,
        sentence=sentence,
        target=target,
    )
