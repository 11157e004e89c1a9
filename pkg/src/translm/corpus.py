"""Parallel corpus handling: ingest, hygiene filters, sampling, splits, statistics."""

from __future__ import annotations

import json
import random
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

from .langs import rough_token_count

DEFAULT_MAX_LEN_RATIO = 9.0
DEFAULT_MAX_TOKENS_PER_SIDE = 256


@dataclass(frozen=True)
class SentencePair:
    """One aligned sentence pair; the atomic unit of the bilingual stages."""

    id: str
    source_lang: str
    target_lang: str
    source_text: str
    target_text: str

    def __post_init__(self):
        if self.source_lang == self.target_lang:
            raise ValueError(f"pair {self.id}: source and target language are both {self.source_lang!r}")
        for side, text in (("source", self.source_text), ("target", self.target_text)):
            if not text.strip():
                raise ValueError(f"pair {self.id}: {side} text is empty")
            if "\n" in text or "\r" in text:
                raise ValueError(f"pair {self.id}: {side} text contains a newline")

    @property
    def direction(self) -> str:
        return f"{self.source_lang}-{self.target_lang}"

    def swapped(self) -> "SentencePair":
        """The same pair in the reverse direction."""
        return SentencePair(
            id=f"{self.id}:rev",
            source_lang=self.target_lang,
            target_lang=self.source_lang,
            source_text=self.target_text,
            target_text=self.source_text,
        )


@dataclass
class RejectRecord:
    file: str
    line: int
    reason: str

    def to_json(self) -> str:
        return json.dumps({"file": self.file, "line": self.line, "reason": self.reason}, ensure_ascii=False)


@dataclass
class CorpusStats:
    pair_count: int
    token_count: int
    per_direction_counts: dict[str, int] = field(default_factory=dict)


def ingest(
    path: str | Path,
    format: str,
    src: str,
    tgt: str,
    rejects: list[RejectRecord] | None = None,
) -> list[SentencePair]:
    """Read sentence pairs from a TSV (``source\\ttarget``) or JSONL (``src``/``tgt``) file.

    Malformed rows are appended to ``rejects`` (when given) and skipped; an
    unreadable file raises. Ids are ``<filename>:<line_number>`` with 1-based lines.
    """
    path = Path(path)
    if format not in ("tsv", "jsonl"):
        raise ValueError(f"unknown corpus format {format!r} (expected tsv or jsonl)")
    pairs: list[SentencePair] = []
    name = path.name
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            try:
                if format == "tsv":
                    cols = line.split("\t")
                    if len(cols) < 2:
                        raise ValueError("expected at least 2 tab-separated columns")
                    source_text, target_text = cols[0], cols[1]
                else:
                    obj = json.loads(line)
                    if not isinstance(obj, dict):
                        raise ValueError("expected a JSON object")
                    source_text, target_text = obj.get("src"), obj.get("tgt")
                    if not isinstance(source_text, str) or not isinstance(target_text, str):
                        raise ValueError("object must carry string fields 'src' and 'tgt'")
                pair = SentencePair(
                    id=f"{name}:{lineno}",
                    source_lang=src,
                    target_lang=tgt,
                    source_text=source_text.strip(),
                    target_text=target_text.strip(),
                )
            except (ValueError, json.JSONDecodeError) as exc:
                if rejects is not None:
                    rejects.append(RejectRecord(file=name, line=lineno, reason=str(exc)))
                continue
            pairs.append(pair)
    return pairs


def write_rejects_report(rejects: list[RejectRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in rejects:
            fh.write(rec.to_json() + "\n")


def _dedup_key(pair: SentencePair) -> tuple[str, str]:
    # NFC-normalized, trimmed (source, target) pair: the duplicate identity.
    return (
        unicodedata.normalize("NFC", pair.source_text.strip()),
        unicodedata.normalize("NFC", pair.target_text.strip()),
    )


def clean(
    pairs: list[SentencePair],
    max_len_ratio: float = DEFAULT_MAX_LEN_RATIO,
    max_tokens_per_side: int = DEFAULT_MAX_TOKENS_PER_SIDE,
) -> list[SentencePair]:
    """Drop empty, duplicate, overlong, and length-ratio-outlier pairs.

    Deterministic, order-preserving, and idempotent. Token lengths use
    :func:`translm.langs.rough_token_count`.
    """
    if max_len_ratio <= 1:
        raise ValueError(f"max_len_ratio must be > 1, got {max_len_ratio}")
    seen: set[tuple[str, str]] = set()
    kept: list[SentencePair] = []
    for pair in pairs:
        if not pair.source_text.strip() or not pair.target_text.strip():
            continue
        a = rough_token_count(pair.source_text)
        b = rough_token_count(pair.target_text)
        if a == 0 or b == 0:
            continue
        if a > max_tokens_per_side or b > max_tokens_per_side:
            continue
        if max(a, b) / min(a, b) > max_len_ratio:
            continue
        key = _dedup_key(pair)
        if key in seen:
            continue
        seen.add(key)
        kept.append(pair)
    return kept


def sample_seeded(pairs: list[SentencePair], k: int, seed: int) -> list[SentencePair]:
    """Uniform sample without replacement, returned in original-index order."""
    if k < 0:
        raise ValueError(f"sample size must be non-negative, got {k}")
    if k > len(pairs):
        raise ValueError(f"cannot sample {k} pairs from a corpus of {len(pairs)}")
    indices = list(range(len(pairs)))
    random.Random(seed).shuffle(indices)
    return [pairs[i] for i in sorted(indices[:k])]


def split(
    pairs: list[SentencePair],
    dev_fraction: float,
    test_fraction: float,
    seed: int,
) -> tuple[list[SentencePair], list[SentencePair], list[SentencePair]]:
    """Disjoint (train, dev, test) partition; deterministic under the seed."""
    if dev_fraction < 0 or test_fraction < 0:
        raise ValueError("split fractions must be non-negative")
    if dev_fraction + test_fraction >= 1:
        raise ValueError(f"dev + test fractions must sum below 1, got {dev_fraction + test_fraction}")
    n = len(pairs)
    n_dev = int(n * dev_fraction)
    n_test = int(n * test_fraction)
    indices = list(range(n))
    random.Random(seed).shuffle(indices)
    dev_idx = sorted(indices[:n_dev])
    test_idx = sorted(indices[n_dev : n_dev + n_test])
    train_idx = sorted(indices[n_dev + n_test :])
    return (
        [pairs[i] for i in train_idx],
        [pairs[i] for i in dev_idx],
        [pairs[i] for i in test_idx],
    )


def stats(pairs: list[SentencePair], tokenizer) -> CorpusStats:
    """Exact pair/token counts per the given trained tokenizer."""
    per_direction: dict[str, int] = {}
    token_count = 0
    for pair in pairs:
        per_direction[pair.direction] = per_direction.get(pair.direction, 0) + 1
        token_count += len(tokenizer.encode(pair.source_text))
        token_count += len(tokenizer.encode(pair.target_text))
    return CorpusStats(pair_count=len(pairs), token_count=token_count, per_direction_counts=per_direction)


def write_pairs_jsonl(pairs: list[SentencePair], path: str | Path) -> None:
    """Write pairs as JSONL ``{"src": ..., "tgt": ...}`` (ingest-compatible)."""
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps({"src": pair.source_text, "tgt": pair.target_text}, ensure_ascii=False) + "\n")


def write_pairs_tsv(pairs: list[SentencePair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(f"{pair.source_text}\t{pair.target_text}\n")
