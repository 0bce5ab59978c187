"""Cosine similarity between items over binary consumption columns.

Similarity of two items is |A∩B| / sqrt(|A|·|B|) over their consumer sets;
only co-consumed pairs are materialized. Also provides the set-similarity
queries the category grower leans on: max-aggregate similarity of a
candidate to a growing member set (with an incremental tracker) and the
closest member of a set to a given item.
"""

from __future__ import annotations

import heapq
import logging
import os
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .data import BinaryMatrix
from .errors import DataError

_logger = logging.getLogger(__name__)

SIMILARITY_MAGIC = b"HLTF-CS1"


class SparseSimilarity:
    """Symmetric item-item cosine with zero diagonal, CSR-backed.

    Values lie in (0, 1]; absent entries are exact zeros (no co-consumer).
    """

    def __init__(self, csr: sp.csr_matrix):
        csr = csr.tocsr()
        csr.sort_indices()
        self._csr = csr

    @property
    def n_items(self) -> int:
        return self._csr.shape[0]

    def value(self, a: int, b: int) -> float:
        if a == b:
            return 0.0
        row = self._csr
        lo, hi = row.indptr[a], row.indptr[a + 1]
        pos = np.searchsorted(row.indices[lo:hi], b)
        if pos < hi - lo and row.indices[lo + pos] == b:
            return float(row.data[lo + pos])
        return 0.0

    def neighbors(self, a: int) -> tuple[np.ndarray, np.ndarray]:
        """Sorted neighbor indices of ``a`` and their similarity values."""
        m = self._csr
        lo, hi = m.indptr[a], m.indptr[a + 1]
        return m.indices[lo:hi], m.data[lo:hi]

    def csr(self) -> sp.csr_matrix:
        return self._csr

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | os.PathLike) -> None:
        """HLTF-CS1: per-item delta-encoded neighbor ids with f32 values."""
        m = self._csr
        with open(path, "wb") as fh:
            fh.write(SIMILARITY_MAGIC)
            np.array([self.n_items], dtype="<u4").tofile(fh)
            np.array([m.nnz], dtype="<u8").tofile(fh)
            for a in range(self.n_items):
                lo, hi = m.indptr[a], m.indptr[a + 1]
                idx = m.indices[lo:hi].astype(np.int64)
                np.array([hi - lo], dtype="<u4").tofile(fh)
                if hi > lo:
                    deltas = np.empty(hi - lo, dtype="<u4")
                    deltas[0] = idx[0]
                    deltas[1:] = np.diff(idx)
                    deltas.tofile(fh)
                    m.data[lo:hi].astype("<f4").tofile(fh)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "SparseSimilarity":
        try:
            with open(path, "rb") as fh:
                if fh.read(8) != SIMILARITY_MAGIC:
                    raise DataError(f"{path}: not an HLTF-CS1 similarity file")
                (n_items,) = np.fromfile(fh, dtype="<u4", count=1)
                (nnz,) = np.fromfile(fh, dtype="<u8", count=1)
                indptr = np.zeros(int(n_items) + 1, dtype=np.int64)
                indices = np.empty(int(nnz), dtype=np.int32)
                values = np.empty(int(nnz), dtype=np.float64)
                at = 0
                for a in range(int(n_items)):
                    (count,) = np.fromfile(fh, dtype="<u4", count=1)
                    count = int(count)
                    if count:
                        deltas = np.fromfile(fh, dtype="<u4", count=count)
                        vals = np.fromfile(fh, dtype="<f4", count=count)
                        if len(deltas) != count or len(vals) != count:
                            raise DataError(f"{path}: truncated similarity file")
                        indices[at : at + count] = np.cumsum(deltas.astype(np.int64))
                        values[at : at + count] = vals
                    at += count
                    indptr[a + 1] = at
                if at != int(nnz):
                    raise DataError(f"{path}: entry count mismatch")
        except OSError as exc:
            raise DataError(f"cannot read similarity {path}: {exc}") from exc
        csr = sp.csr_matrix((values, indices, indptr), shape=(int(n_items), int(n_items)))
        return cls(csr)


def cosine_item_pairs(
    matrix: BinaryMatrix,
    *,
    max_user_items: int = 10_000,
    allow_empty_columns: bool = False,
) -> SparseSimilarity:
    """All nonzero item-item cosines of a binary matrix.

    Cost is per-user pair enumeration, O(sum over users of items^2); users
    consuming more than ``max_user_items`` items are skipped with a warning
    (they would dominate the pair count while carrying almost no signal).
    Items with zero consumers violate the contract unless
    ``allow_empty_columns`` is set (internal layers legitimately produce
    them; they simply have no neighbors).
    """
    counts = matrix.item_counts().astype(np.int64)
    if not allow_empty_columns and matrix.n_items and counts.min() == 0:
        raise DataError("item with zero consumers; filter the data first")

    R = matrix.csr()
    row_sizes = np.diff(R.indptr)
    heavy = row_sizes > max_user_items
    if heavy.any():
        _logger.warning(
            "skipping %d users with more than %d items in pair counting",
            int(heavy.sum()),
            max_user_items,
        )
        keep = ~heavy
        R = R[keep]
        counts = np.asarray(R.sum(axis=0)).ravel().astype(np.int64)

    co = (R.T.astype(np.int64) @ R.astype(np.int64)).tocoo()
    mask = co.row != co.col
    rows, cols, inter = co.row[mask], co.col[mask], co.data[mask]
    with np.errstate(divide="ignore", invalid="ignore"):
        values = inter / np.sqrt(counts[rows] * counts[cols])
    csr = sp.csr_matrix(
        (values, (rows, cols)), shape=(matrix.n_items, matrix.n_items)
    )
    return SparseSimilarity(csr)


def most_similar_to_set(
    candidates: Iterable[int], members: Sequence[int], sim: SparseSimilarity
) -> int | None:
    """Candidate with the highest max-similarity to any member.

    Ties break to the lowest item index. Returns None when no candidate
    co-occurs with the set at all (every aggregate is zero) or the candidate
    pool is empty; the grower decides what to do then (seed orphans become
    singleton categories, mid-growth it falls back to the lowest index).
    """
    cand = set(int(c) for c in candidates)
    if not cand:
        return None
    agg: dict[int, float] = {}
    for m in members:
        idx, vals = sim.neighbors(int(m))
        for j, v in zip(idx.tolist(), vals.tolist()):
            if j in cand and v > agg.get(j, 0.0):
                agg[j] = v
    best_item, best_val = None, 0.0
    for j in sorted(agg):  # ascending index + strict > == lowest index on ties
        if agg[j] > best_val:
            best_item, best_val = j, agg[j]
    return best_item


def closest_in_set(members: Sequence[int], item: int, sim: SparseSimilarity) -> int:
    """Member most similar to ``item``; ties and all-zero fall to lowest index."""
    members = sorted(int(m) for m in members)
    if not members:
        raise ValueError("empty member set")
    best, best_val = members[0], -1.0
    for m in members:
        v = sim.value(m, int(item))
        if v > best_val:
            best, best_val = m, v
    return best


class CandidateTracker:
    """Incremental max-aggregate similarity of candidates to a growing set.

    Adding a member only touches that member's neighbor list (the aggregate
    is a running max), so category growth stays near-linear. Ties break to
    the lowest item index; candidates no co-occurring member has touched are
    never surfaced by :meth:`best`.
    """

    def __init__(self, sim: SparseSimilarity, candidates: Iterable[int]):
        self._sim = sim
        self._cands = set(int(c) for c in candidates)
        self._agg: dict[int, float] = {}
        self._heap: list[tuple[float, int]] = []

    def __len__(self) -> int:
        return len(self._cands)

    def add_member(self, item: int) -> None:
        idx, vals = self._sim.neighbors(int(item))
        for j, v in zip(idx.tolist(), vals.tolist()):
            if j in self._cands and v > self._agg.get(j, 0.0):
                self._agg[j] = v
                heapq.heappush(self._heap, (-v, j))

    def remove(self, item: int) -> None:
        self._cands.discard(int(item))

    def best(self) -> int | None:
        while self._heap:
            neg_v, j = self._heap[0]
            if j in self._cands and self._agg.get(j) == -neg_v:
                return j
            heapq.heappop(self._heap)
        return None

    def lowest_index(self) -> int | None:
        return min(self._cands) if self._cands else None
