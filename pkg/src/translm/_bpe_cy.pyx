# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled BPE kernels. Semantics must match ``_bpe_py`` exactly."""

# Pairs are packed into one int key: vocab ids stay far below 2**21.
DEF PACK_SHIFT = 21


def merge_pair(list seq, int left, int right, int new_id):
    cdef Py_ssize_t i = 0, n = len(seq)
    cdef int a
    cdef list out = []
    while i < n:
        a = seq[i]
        if a == left and i + 1 < n and <int> seq[i + 1] == right:
            out.append(new_id)
            i += 2
        else:
            out.append(a)
            i += 1
    return out


cdef dict _count_packed(list chunks, list weights):
    cdef dict counts = {}
    cdef list chunk
    cdef Py_ssize_t ci, i, n
    cdef long long w, key
    cdef int prev, cur
    for ci in range(len(chunks)):
        chunk = chunks[ci]
        w = weights[ci]
        n = len(chunk)
        if n < 2:
            continue
        prev = chunk[0]
        for i in range(1, n):
            cur = chunk[i]
            key = ((<long long> prev) << PACK_SHIFT) | cur
            counts[key] = counts.get(key, 0) + w
            prev = cur
    return counts


def count_pairs(list chunks, list weights):
    cdef dict packed = _count_packed(chunks, weights)
    cdef dict out = {}
    cdef long long key
    for key, cnt in packed.items():
        out[(<int> (key >> PACK_SHIFT), <int> (key & ((1 << PACK_SHIFT) - 1)))] = cnt
    return out


def train_merges(list chunks, list weights, int n_merges, list id_to_bytes):
    cdef list work = [list(c) for c in chunks]
    cdef list merges = []
    cdef dict counts
    cdef long long key
    cdef int left, right, best_left, best_right, new_id
    cdef long long cnt, best_cnt
    cdef bytes merged, best_merged
    cdef Py_ssize_t step, ci
    for step in range(n_merges):
        counts = _count_packed(work, weights)
        best_cnt = 0
        best_merged = None
        best_left = -1
        best_right = -1
        for key, cnt in counts.items():
            if cnt < 2:
                continue
            left = <int> (key >> PACK_SHIFT)
            right = <int> (key & ((1 << PACK_SHIFT) - 1))
            merged = (<bytes> id_to_bytes[left]) + (<bytes> id_to_bytes[right])
            if (
                best_merged is None
                or cnt > best_cnt
                or (cnt == best_cnt and merged < best_merged)
                or (cnt == best_cnt and merged == best_merged and (left, right) < (best_left, best_right))
            ):
                best_cnt = cnt
                best_merged = merged
                best_left = left
                best_right = right
        if best_merged is None:
            break
        new_id = <int> len(id_to_bytes)
        id_to_bytes.append(best_merged)
        merges.append((best_left, best_right))
        for ci in range(len(work)):
            work[ci] = merge_pair(work[ci], best_left, best_right, new_id)
    return merges


def build_ranks(list merges):
    cdef dict ranks = {}
    cdef Py_ssize_t rank
    cdef int left, right
    for rank in range(len(merges)):
        left, right = merges[rank]
        ranks[((<long long> left) << PACK_SHIFT) | right] = rank
    return ranks


def encode_chunk(list ids, dict ranks, int first_merge_id):
    cdef list out = list(ids)
    cdef Py_ssize_t i, n
    cdef int prev, cur, best_left, best_right
    cdef long long best_rank, rank
    while len(out) >= 2:
        n = len(out)
        best_rank = -1
        best_left = -1
        best_right = -1
        prev = out[0]
        for i in range(1, n):
            cur = out[i]
            rank = ranks.get(((<long long> prev) << PACK_SHIFT) | cur, -1)
            if rank != -1 and (best_rank == -1 or rank < best_rank):
                best_rank = rank
                best_left = prev
                best_right = cur
            prev = cur
        if best_rank == -1:
            break
        out = merge_pair(out, best_left, best_right, first_merge_id + <int> best_rank)
    return out
