"""Instruction-tuning records with source-language-consistent instructions.

The translation instruction is written in the source language of each pair;
the English-Fixed mode (the ablation baseline) uses an English instruction for
every direction. Rendering produces token ids plus a response-only loss mask.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

from .corpus import SentencePair
from .tokenizer import Tokenizer

ENGLISH_FIXED_LITERAL = "Translate this sentence from the source language to the target language:"


class InstructionMode(Enum):
    SOURCE_CONSISTENT = "source_consistent"
    ENGLISH_FIXED = "english_fixed"


@dataclass(frozen=True)
class InstructionTemplate:
    source_lang: str
    target_lang: str
    mode: InstructionMode
    text: str


@dataclass(frozen=True)
class SftRecord:
    instruction: str
    input: str
    output: str
    source_lang: str
    target_lang: str

    @property
    def direction(self) -> str:
        return f"{self.source_lang}-{self.target_lang}"


def _load_default_templates() -> dict[str, dict[str, str]]:
    with resources.files(__package__).joinpath("templates.json").open(encoding="utf-8") as fh:
        return json.load(fh)


_DEFAULT_TEMPLATES = _load_default_templates()


def load_templates(path: str | Path) -> dict[str, dict[str, str]]:
    """Load a template table from JSON, overlaying it on the built-in one."""
    with open(path, encoding="utf-8") as fh:
        override = json.load(fh)
    merged = {mode: dict(table) for mode, table in _DEFAULT_TEMPLATES.items()}
    for mode, table in override.items():
        if mode not in merged:
            raise ValueError(f"unknown template mode {mode!r}")
        merged[mode].update(table)
    return merged


def template_for(
    source_lang: str,
    target_lang: str,
    mode: InstructionMode,
    templates: dict[str, dict[str, str]] | None = None,
    fixed_literal: bool = False,
) -> InstructionTemplate:
    """Canonical instruction for a direction and mode.

    ``fixed_literal`` swaps the English-Fixed text for the single generic
    sentence that names no languages.
    """
    table = templates if templates is not None else _DEFAULT_TEMPLATES
    if fixed_literal and mode is InstructionMode.ENGLISH_FIXED:
        return InstructionTemplate(source_lang, target_lang, mode, ENGLISH_FIXED_LITERAL)
    direction = f"{source_lang}-{target_lang}"
    try:
        text = table[mode.value][direction]
    except KeyError:
        supported = sorted(table[mode.value])
        raise KeyError(
            f"no instruction template for direction {direction!r} in mode {mode.value}; "
            f"supported directions: {', '.join(supported)}"
        ) from None
    return InstructionTemplate(source_lang, target_lang, mode, text)


def build_sft_dataset(
    pairs: list[SentencePair],
    mode: InstructionMode,
    templates: dict[str, dict[str, str]] | None = None,
    fixed_literal: bool = False,
) -> list[SftRecord]:
    """One record per pair, in input order."""
    records = []
    for pair in pairs:
        template = template_for(pair.source_lang, pair.target_lang, mode, templates, fixed_literal)
        records.append(
            SftRecord(
                instruction=template.text,
                input=pair.source_text,
                output=pair.target_text,
                source_lang=pair.source_lang,
                target_lang=pair.target_lang,
            )
        )
    return records


def render_prompt(record: SftRecord) -> str:
    return f"{record.instruction}\n{record.input}\n"


def render_training_text(record: SftRecord, tokenizer: Tokenizer) -> tuple[list[int], list[int]]:
    """Token ids and response-only loss mask for one record.

    Sequence: BOS + prompt tokens + response tokens + EOS. The mask is 0 over
    BOS and the prompt, 1 over the response and EOS.
    """
    prompt_ids = tokenizer.encode(render_prompt(record))
    response_ids = tokenizer.encode(record.output)
    ids = [tokenizer.bos_id] + prompt_ids + response_ids + [tokenizer.eos_id]
    mask = [0] * (1 + len(prompt_ids)) + [1] * (len(response_ids) + 1)
    return ids, mask


@dataclass
class RenderedDataset:
    sequences: list[tuple[list[int], list[int]]]
    skipped: list[tuple[int, int]]  # (record index, rendered length) beyond the budget


def render_dataset(records: list[SftRecord], tokenizer: Tokenizer, max_seq_len: int) -> RenderedDataset:
    """Render all records, skipping (with a report) those exceeding ``max_seq_len``."""
    sequences = []
    skipped = []
    for idx, record in enumerate(records):
        ids, mask = render_training_text(record, tokenizer)
        if len(ids) > max_seq_len:
            skipped.append((idx, len(ids)))
            continue
        sequences.append((ids, mask))
    return RenderedDataset(sequences=sequences, skipped=skipped)


def write_sft_jsonl(records: list[SftRecord], path: str | Path) -> None:
    """Alpaca-style JSONL: ``{instruction, input, output, src, tgt}``."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "instruction": rec.instruction,
                        "input": rec.input,
                        "output": rec.output,
                        "src": rec.source_lang,
                        "tgt": rec.target_lang,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_sft_jsonl(path: str | Path) -> list[SftRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(
                    SftRecord(
                        instruction=obj["instruction"],
                        input=obj["input"],
                        output=obj["output"],
                        source_lang=obj["src"],
                        target_lang=obj["tgt"],
                    )
                )
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed SFT record: {exc}") from exc
    return records
