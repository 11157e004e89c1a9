"""Pure-Python BPE kernels: the fallback used when the compiled extension is absent.

Must stay semantically identical to ``_bpe_cy`` — both backends are required to
produce bit-identical merges and token ids for the same input.
"""

from __future__ import annotations


def merge_pair(seq: list[int], left: int, right: int, new_id: int) -> list[int]:
    """Replace left-to-right, non-overlapping occurrences of (left, right)."""
    out: list[int] = []
    i = 0
    n = len(seq)
    while i < n:
        if i + 1 < n and seq[i] == left and seq[i + 1] == right:
            out.append(new_id)
            i += 2
        else:
            out.append(seq[i])
            i += 1
    return out


def count_pairs(chunks: list[list[int]], weights: list[int]) -> dict[tuple[int, int], int]:
    """Weighted adjacent-pair counts across chunks (overlapping pairs both count)."""
    counts: dict[tuple[int, int], int] = {}
    for chunk, w in zip(chunks, weights):
        for i in range(len(chunk) - 1):
            pair = (chunk[i], chunk[i + 1])
            counts[pair] = counts.get(pair, 0) + w
    return counts


def train_merges(
    chunks: list[list[int]],
    weights: list[int],
    n_merges: int,
    id_to_bytes: list[bytes],
) -> list[tuple[int, int]]:
    """Greedy highest-frequency merge selection.

    Ties break on the lexicographic byte order of the merged token, then on the
    (left, right) id pair, making the result independent of dict iteration
    order. Stops early when no pair occurs at least twice. New token ids are
    appended to ``id_to_bytes`` (mutated in place).
    """
    chunks = [list(c) for c in chunks]
    merges: list[tuple[int, int]] = []
    for _ in range(n_merges):
        counts = count_pairs(chunks, weights)
        best_pair = None
        best_key = None
        for pair, cnt in counts.items():
            if cnt < 2:
                continue
            merged = id_to_bytes[pair[0]] + id_to_bytes[pair[1]]
            key = (-cnt, merged, pair)
            if best_key is None or key < best_key:
                best_key = key
                best_pair = pair
        if best_pair is None:
            break
        new_id = len(id_to_bytes)
        id_to_bytes.append(id_to_bytes[best_pair[0]] + id_to_bytes[best_pair[1]])
        merges.append(best_pair)
        chunks = [merge_pair(c, best_pair[0], best_pair[1], new_id) for c in chunks]
    return merges


def build_ranks(merges: list[tuple[int, int]]) -> dict[tuple[int, int], int]:
    return {pair: rank for rank, pair in enumerate(merges)}


def encode_chunk(ids: list[int], ranks: dict[tuple[int, int], int], first_merge_id: int) -> list[int]:
    """Apply merges in rank priority order until no merge applies."""
    out = list(ids)
    while len(out) >= 2:
        best_rank = -1
        best_left = -1
        best_right = -1
        prev = out[0]
        for i in range(1, len(out)):
            cur = out[i]
            rank = ranks.get((prev, cur), -1)
            if rank != -1 and (best_rank == -1 or rank < best_rank):
                best_rank = rank
                best_left = prev
                best_right = cur
            prev = cur
        if best_rank == -1:
            break
        out = merge_pair(out, best_left, best_right, first_merge_id + best_rank)
    return out
