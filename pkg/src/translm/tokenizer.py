"""Byte-level BPE tokenizer used for token accounting, packing, and the toy LM.

Merges never cross a ``"\\n"`` boundary: text is chunked after each newline and
chunks are encoded independently. This makes token counts additive over
line-complete pieces, which the document packer relies on.

The hot loops (merge training, encoding) live in a compiled Cython kernel when
available, with a pure-Python fallback selected at import time. Both backends
are bit-identical; ``KERNEL_BACKEND`` names the active one.
"""

from __future__ import annotations

import json
import os
from collections import Counter
from pathlib import Path

if os.environ.get("TRANSLM_PURE_PYTHON"):
    from . import _bpe_py as _kernels

    KERNEL_BACKEND = "python"
else:
    try:
        from . import _bpe_cy as _kernels  # type: ignore[attr-defined]

        KERNEL_BACKEND = "cython"
    except ImportError:
        from . import _bpe_py as _kernels

        KERNEL_BACKEND = "python"

N_BYTES = 256
BOS_ID = 256
EOS_ID = 257
PAD_ID = 258
N_SPECIALS = 3
FIRST_MERGE_ID = N_BYTES + N_SPECIALS

VOCAB_FILE_VERSION = 1


def available_backends() -> dict[str, object]:
    """All importable kernel backends, for equivalence tests and benchmarks."""
    from . import _bpe_py

    backends: dict[str, object] = {"python": _bpe_py}
    try:
        from . import _bpe_cy  # type: ignore[attr-defined]

        backends["cython"] = _bpe_cy
    except ImportError:
        pass
    return backends


def _split_chunks(text: str) -> list[str]:
    # Split after every newline; merges never span these boundaries.
    parts = text.split("\n")
    chunks = [p + "\n" for p in parts[:-1]]
    if parts[-1]:
        chunks.append(parts[-1])
    return chunks


class Tokenizer:
    """Trained byte-level BPE vocabulary with encode/decode.

    Immutable after construction; encode/decode are reentrant.
    """

    def __init__(self, id_to_bytes: list[bytes], merges: list[tuple[int, int]]):
        self.id_to_bytes = list(id_to_bytes)
        self.merges = [tuple(m) for m in merges]
        self.bos_id = BOS_ID
        self.eos_id = EOS_ID
        self.pad_id = PAD_ID
        self._validate()
        self._ranks = _kernels.build_ranks(self.merges)

    def _validate(self) -> None:
        if len(self.id_to_bytes) != FIRST_MERGE_ID + len(self.merges):
            raise ValueError("id_to_bytes length inconsistent with merge count")
        for i in range(N_BYTES):
            if self.id_to_bytes[i] != bytes([i]):
                raise ValueError(f"id {i} must map to its single byte")
        for rank, (left, right) in enumerate(self.merges):
            limit = FIRST_MERGE_ID + rank
            if not (0 <= left < limit and 0 <= right < limit):
                raise ValueError(f"merge {rank} references undefined ids ({left}, {right})")

    @property
    def vocab_size(self) -> int:
        return len(self.id_to_bytes)

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset((self.bos_id, self.eos_id, self.pad_id))

    def encode(self, text: str) -> list[int]:
        ids: list[int] = []
        for chunk in _split_chunks(text):
            ids.extend(_kernels.encode_chunk(list(chunk.encode("utf-8")), self._ranks, FIRST_MERGE_ID))
        return ids

    def token_count(self, text: str) -> int:
        return len(self.encode(text))

    def decode(self, ids: list[int], skip_special: bool = True) -> str:
        pieces = []
        for i in ids:
            if i in self.special_ids:
                if skip_special:
                    continue
                raise ValueError(f"special token id {i} has no text form")
            if not (0 <= i < len(self.id_to_bytes)):
                raise ValueError(f"unknown token id {i} (vocab size {len(self.id_to_bytes)})")
            pieces.append(self.id_to_bytes[i])
        return b"".join(pieces).decode("utf-8", errors="replace")

    def save(self, path: str | Path) -> None:
        """Persist as JSON; the exact bytes are the determinism artifact."""
        payload = {
            "version": VOCAB_FILE_VERSION,
            "id_to_bytes": [b.hex() for b in self.id_to_bytes],
            "merges": [list(m) for m in self.merges],
            "specials": {"bos": self.bos_id, "eos": self.eos_id, "pad": self.pad_id},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "Tokenizer":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("version") != VOCAB_FILE_VERSION:
            raise ValueError(f"unsupported vocab file version {payload.get('version')!r}")
        id_to_bytes = [bytes.fromhex(h) for h in payload["id_to_bytes"]]
        merges = [(int(l), int(r)) for l, r in payload["merges"]]
        return cls(id_to_bytes, merges)


def train_bpe(texts: list[str], vocab_size: int) -> Tokenizer:
    """Train a byte-level BPE vocabulary with greedy highest-frequency merges.

    ``vocab_size`` counts the 256 byte ids and the 3 specials; training stops
    early when no pair occurs twice. Identical inputs give identical vocabs.
    """
    if vocab_size < FIRST_MERGE_ID:
        raise ValueError(f"vocab_size must be at least {FIRST_MERGE_ID} (bytes + specials), got {vocab_size}")
    chunk_counts: Counter[str] = Counter()
    for text in texts:
        chunk_counts.update(_split_chunks(text))
    chunks = [list(c.encode("utf-8")) for c in chunk_counts]
    weights = list(chunk_counts.values())
    id_to_bytes = [bytes([i]) for i in range(N_BYTES)] + [b""] * N_SPECIALS
    merges = _kernels.train_merges(chunks, weights, vocab_size - FIRST_MERGE_ID, id_to_bytes)
    return Tokenizer(id_to_bytes, merges)
