"""Interlinear bilingual documents: aligned source/translation line pairs packed
into fixed token budgets for continual pre-training."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .corpus import SentencePair
from .langs import get_language
from .tokenizer import Tokenizer

BLOCK_SEPARATOR = "\n"  # one blank line between blocks


@dataclass(frozen=True)
class InterlinearBlock:
    source_label: str
    source_text: str
    target_label: str
    target_text: str


@dataclass
class Document:
    """One packed pre-training document; rendering follows the block grammar exactly."""

    blocks: list[InterlinearBlock]
    rendered_text: str
    token_count: int


def format_block(pair: SentencePair) -> str:
    """Render one pair as two labeled lines: ``<SourceName>: <text>\\n<TargetName>: <text>\\n``."""
    src = get_language(pair.source_lang)
    tgt = get_language(pair.target_lang)
    return f"{src.display_name}: {pair.source_text}\n{tgt.display_name}: {pair.target_text}\n"


def parse_block(text: str) -> InterlinearBlock:
    """Inverse of :func:`format_block`; raises on anything the grammar cannot produce."""
    lines = text.strip("\n").split("\n")
    if len(lines) != 2:
        raise ValueError(f"interlinear block must have exactly 2 lines, got {len(lines)}")
    parsed = []
    for line in lines:
        label, sep, value = line.partition(": ")
        if not sep or not label:
            raise ValueError(f"malformed interlinear line: {line!r}")
        parsed.append((label, value))
    return InterlinearBlock(
        source_label=parsed[0][0],
        source_text=parsed[0][1],
        target_label=parsed[1][0],
        target_text=parsed[1][1],
    )


def parse_document_text(text: str) -> list[InterlinearBlock]:
    return [parse_block(piece) for piece in text.split("\n\n")]


def expand_directions(pairs: list[SentencePair]) -> list[SentencePair]:
    """Materialize both directions of a pair corpus (each pair once per direction)."""
    out: list[SentencePair] = []
    for pair in pairs:
        out.append(pair)
        out.append(pair.swapped())
    return out


@dataclass
class PackReport:
    documents: list[Document]
    dropped: list[SentencePair]  # blocks whose lone rendering exceeds the budget


def pack_documents(
    pairs: list[SentencePair],
    max_tokens: int,
    tokenizer: Tokenizer,
    seed: int,
) -> PackReport:
    """Shuffle pairs with the seed, then greedily pack blocks into documents.

    Blocks inside a document are separated by one blank line. A block that
    alone exceeds ``max_tokens`` is dropped and reported. Token accounting is
    exact: the tokenizer never merges across newlines, so a document's token
    count equals the sum of its blocks' (separator-inclusive) counts.
    """
    order = list(range(len(pairs)))
    random.Random(seed).shuffle(order)

    sep_cost = tokenizer.token_count(BLOCK_SEPARATOR)
    documents: list[Document] = []
    dropped: list[SentencePair] = []

    cur_blocks: list[InterlinearBlock] = []
    cur_texts: list[str] = []
    cur_tokens = 0

    def close_current():
        nonlocal cur_blocks, cur_texts, cur_tokens
        if cur_blocks:
            documents.append(
                Document(blocks=cur_blocks, rendered_text=BLOCK_SEPARATOR.join(cur_texts), token_count=cur_tokens)
            )
        cur_blocks = []
        cur_texts = []
        cur_tokens = 0

    for idx in order:
        pair = pairs[idx]
        text = format_block(pair)
        cost = tokenizer.token_count(text)
        if cost > max_tokens:
            dropped.append(pair)
            continue
        added = cost if not cur_blocks else cost + sep_cost
        if cur_blocks and cur_tokens + added > max_tokens:
            close_current()
            added = cost
        cur_blocks.append(
            InterlinearBlock(
                source_label=get_language(pair.source_lang).display_name,
                source_text=pair.source_text,
                target_label=get_language(pair.target_lang).display_name,
                target_text=pair.target_text,
            )
        )
        cur_texts.append(text)
        cur_tokens += added
    close_current()
    return PackReport(documents=documents, dropped=dropped)


def serialize(docs: list[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(
                json.dumps(
                    {"text": doc.rendered_text, "token_count": doc.token_count, "block_count": len(doc.blocks)},
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_documents(path: str | Path) -> list[Document]:
    docs: list[Document] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                text = obj["text"]
                token_count = int(obj["token_count"])
                block_count = int(obj["block_count"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed document line: {exc}") from exc
            blocks = parse_document_text(text)
            if len(blocks) != block_count:
                raise ValueError(f"{path}:{lineno}: block_count {block_count} != parsed {len(blocks)}")
            docs.append(Document(blocks=blocks, rendered_text=text, token_count=token_count))
    return docs
