"""Implicit-feedback event logs and sparse binary consumption matrices.

Covers the data plumbing in front of everything else: ingesting delimited
event streams, minimum-activity filtering to a fixpoint, temporal three-way
splitting, and conversion to deduplicated binary user-item matrices that
maintain both row (per-user) and column (per-item) adjacency.
"""

from __future__ import annotations

import gzip
import io
import logging
import math
import os
from dataclasses import dataclass, field
from typing import IO, Iterable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DataError

_logger = logging.getLogger(__name__)

MATRIX_MAGIC = b"HLTF-BM1"


class Event(NamedTuple):
    user: str
    item: str
    timestamp: float


@dataclass
class InteractionLog:
    """An ordered multiset of (user, item, timestamp) events."""

    events: list[Event] = field(default_factory=list)
    malformed: int = 0  # rows skipped at parse time

    def __len__(self) -> int:
        return len(self.events)

    def user_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for ev in self.events:
            counts[ev.user] = counts.get(ev.user, 0) + 1
        return counts

    def item_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for ev in self.events:
            counts[ev.item] = counts.get(ev.item, 0) + 1
        return counts

    def time_range(self) -> tuple[float, float] | None:
        if not self.events:
            return None
        ts = [ev.timestamp for ev in self.events]
        return (min(ts), max(ts))


def _open_text(source: str | os.PathLike | IO) -> IO[str]:
    """Open a path or file object as text, transparently inflating gzip."""
    if hasattr(source, "read"):
        raw = source.read()
        if isinstance(raw, bytes):
            if raw[:2] == b"\x1f\x8b":
                raw = gzip.decompress(raw)
            return io.StringIO(raw.decode("utf-8"))
        return io.StringIO(raw)
    path = os.fspath(source)
    try:
        with open(path, "rb") as fh:
            head = fh.read(2)
    except OSError as exc:
        raise DataError(f"cannot read event source {path!r}: {exc}") from exc
    if head == b"\x1f\x8b":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def load_events(
    source: str | os.PathLike | IO,
    *,
    delimiter: str = ",",
    user_col: int = 0,
    item_col: int = 1,
    time_col: int = 2,
    skip_header: bool = False,
) -> InteractionLog:
    """Parse a delimited event stream into an :class:`InteractionLog`.

    Rows with missing fields, empty tokens, or an unparseable timestamp are
    counted and skipped; if more than half of the data rows are malformed the
    whole source is rejected. An empty stream yields an empty log with a
    warning. Gzip input is detected by magic bytes.
    """
    fh = _open_text(source)
    events: list[Event] = []
    malformed = 0
    width = max(user_col, item_col, time_col) + 1
    try:
        for lineno, line in enumerate(fh):
            if skip_header and lineno == 0:
                continue
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split(delimiter)
            if len(parts) < width:
                malformed += 1
                continue
            user = parts[user_col].strip()
            item = parts[item_col].strip()
            raw_ts = parts[time_col].strip()
            try:
                ts = float(raw_ts)
            except ValueError:
                malformed += 1
                continue
            if not user or not item or not math.isfinite(ts):
                malformed += 1
                continue
            events.append(Event(user, item, ts))
    finally:
        fh.close()

    total = len(events) + malformed
    if total == 0:
        _logger.warning("event source is empty")
    elif malformed * 2 > total:
        raise DataError(
            f"{malformed} of {total} rows are malformed (>50%); refusing the source"
        )
    elif malformed:
        _logger.warning("skipped %d malformed rows out of %d", malformed, total)
    return InteractionLog(events=events, malformed=malformed)


def filter_min_activity(
    log: InteractionLog, min_user_events: int = 3, min_item_events: int = 5
) -> InteractionLog:
    """Alternate user/item pruning until a fixpoint.

    Survivors strictly exceed the thresholds: a user needs more than
    ``min_user_events`` events over surviving items, and an item more than
    ``min_item_events`` events over surviving users. Dropping one side can
    push the other below threshold, hence the loop.
    """
    if min_user_events < 0 or min_item_events < 0:
        raise ValueError("activity thresholds must be non-negative")
    events = list(log.events)
    while True:
        changed = False
        user_counts: dict[str, int] = {}
        for ev in events:
            user_counts[ev.user] = user_counts.get(ev.user, 0) + 1
        kept = [ev for ev in events if user_counts[ev.user] > min_user_events]
        if len(kept) != len(events):
            changed = True
        events = kept
        item_counts: dict[str, int] = {}
        for ev in events:
            item_counts[ev.item] = item_counts.get(ev.item, 0) + 1
        kept = [ev for ev in events if item_counts[ev.item] > min_item_events]
        if len(kept) != len(events):
            changed = True
        events = kept
        if not changed:
            break
    if not events:
        _logger.warning("activity filter removed every event")
    return InteractionLog(events=events, malformed=log.malformed)


def temporal_split(
    log: InteractionLog, fractions: Sequence[float] = (0.7, 0.15, 0.15)
) -> tuple[InteractionLog, InteractionLog, InteractionLog]:
    """Split events into train/validation/test by global time cut points.

    Cut indices are chosen from the time-sorted events so the split sizes
    approximate ``fractions``; every event sharing a timestamp with the event
    at a cut falls into the earlier side, so actual sizes can deviate. The
    second cut is chosen from the events remaining after the first, keeping
    the validation/test ratio honest under ties.
    """
    if len(fractions) != 3:
        raise ValueError("need exactly three fractions")
    if any(f <= 0 for f in fractions):
        raise ValueError("fractions must be positive")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)!r}")
    if not log.events:
        raise DataError("cannot split an empty log")

    events = sorted(log.events, key=lambda ev: ev.timestamp)
    n = len(events)
    if events[0].timestamp == events[-1].timestamp:
        raise DataError("all events share one timestamp; no valid cut exists")

    k1 = min(max(int(round(n * fractions[0])), 1), n - 1)
    t1 = events[k1 - 1].timestamp
    i = k1
    while i < n and events[i].timestamp == t1:
        i += 1
    train, rest = events[:i], events[i:]

    if rest:
        m = len(rest)
        share = fractions[1] / (fractions[1] + fractions[2])
        k2 = min(max(int(round(m * share)), 0), m)
        if k2 == 0:
            valid, test = [], rest
        else:
            t2 = rest[k2 - 1].timestamp
            j = k2
            while j < m and rest[j].timestamp == t2:
                j += 1
            valid, test = rest[:j], rest[j:]
    else:
        valid, test = [], []

    for name, part in (("validation", valid), ("test", test)):
        if not part:
            _logger.warning("temporal split produced an empty %s set", name)
    return (
        InteractionLog(events=train),
        InteractionLog(events=valid),
        InteractionLog(events=test),
    )


@dataclass
class Vocabulary:
    """Dense token indices for users and items."""

    users: list[str]
    items: list[str]
    user_index: dict[str, int] = field(init=False, repr=False)
    item_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.user_index = {tok: i for i, tok in enumerate(self.users)}
        self.item_index = {tok: i for i, tok in enumerate(self.items)}
        if len(self.user_index) != len(self.users):
            raise DataError("duplicate user tokens in vocabulary")
        if len(self.item_index) != len(self.items):
            raise DataError("duplicate item tokens in vocabulary")

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)


def write_vocab(path: str | os.PathLike, tokens: Sequence[str]) -> None:
    """Persist one vocabulary axis as two-column text (index, token)."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, tok in enumerate(tokens):
            fh.write(f"{i}\t{tok}\n")


def read_vocab(path: str | os.PathLike) -> list[str]:
    tokens: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}: bad vocab line {lineno}")
            idx, tok = int(parts[0]), parts[1]
            if idx != len(tokens):
                raise DataError(f"{path}: non-contiguous vocab index {idx} at line {lineno}")
            tokens.append(tok)
    return tokens


class BinaryMatrix:
    """Deduplicated binary user-item consumption matrix.

    Both orientations are maintained: rows give each user's sorted item set,
    columns give each item's sorted user set. Instances are immutable by
    convention; all mutating-looking operations return new matrices.
    """

    def __init__(self, csr: sp.csr_matrix):
        csr = csr.tocsr().astype(np.uint8)
        csr.sum_duplicates()
        csr.data[:] = 1
        csr.sort_indices()
        self._csr = csr
        self._csc = csr.tocsc()
        self._csc.sort_indices()

    # -- construction -------------------------------------------------------

    @classmethod
    def from_pairs(
        cls, n_users: int, n_items: int, users: np.ndarray, items: np.ndarray
    ) -> "BinaryMatrix":
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        if users.size and (users.min() < 0 or users.max() >= n_users):
            raise DataError("user index out of range")
        if items.size and (items.min() < 0 or items.max() >= n_items):
            raise DataError("item index out of range")
        data = np.ones(len(users), dtype=np.uint8)
        csr = sp.csr_matrix((data, (users, items)), shape=(n_users, n_items))
        return cls(csr)

    # -- views ---------------------------------------------------------------

    @property
    def n_users(self) -> int:
        return self._csr.shape[0]

    @property
    def n_items(self) -> int:
        return self._csr.shape[1]

    @property
    def nnz(self) -> int:
        return int(self._csr.nnz)

    def csr(self) -> sp.csr_matrix:
        return self._csr

    def csc(self) -> sp.csc_matrix:
        return self._csc

    def row_items(self, user: int) -> np.ndarray:
        m = self._csr
        return m.indices[m.indptr[user] : m.indptr[user + 1]]

    def col_users(self, item: int) -> np.ndarray:
        m = self._csc
        return m.indices[m.indptr[item] : m.indptr[item + 1]]

    def user_counts(self) -> np.ndarray:
        return np.diff(self._csr.indptr)

    def item_counts(self) -> np.ndarray:
        return np.diff(self._csc.indptr)

    def dense_columns(self, cols: Sequence[int]) -> np.ndarray:
        """Gather a dense uint8 block of the given columns, in given order."""
        cols = np.asarray(cols, dtype=np.int64)
        out = np.zeros((self.n_users, len(cols)), dtype=np.uint8)
        for j, c in enumerate(cols):
            out[self.col_users(int(c)), j] = 1
        return out

    def describe(self) -> dict[str, float]:
        n_u, n_i, nnz = self.n_users, self.n_items, self.nnz
        return {
            "users": n_u,
            "items": n_i,
            "events": nnz,
            "density": nnz / (n_u * n_i) if n_u and n_i else 0.0,
            "mean_items_per_user": nnz / n_u if n_u else 0.0,
            "mean_users_per_item": nnz / n_i if n_i else 0.0,
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMatrix):
            return NotImplemented
        a, b = self._csr, other._csr
        return (
            a.shape == b.shape
            and np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
        )

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | os.PathLike) -> None:
        """Write the matrix in the HLTF-BM1 binary layout.

        Magic, little-endian u32 dims, u64 nnz, u64 row offsets, u32 column
        indices. Stable byte-for-byte for identical content.
        """
        m = self._csr
        with open(path, "wb") as fh:
            fh.write(MATRIX_MAGIC)
            np.array([self.n_users, self.n_items], dtype="<u4").tofile(fh)
            np.array([self.nnz], dtype="<u8").tofile(fh)
            m.indptr.astype("<u8").tofile(fh)
            m.indices.astype("<u4").tofile(fh)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "BinaryMatrix":
        try:
            with open(path, "rb") as fh:
                magic = fh.read(8)
                if magic != MATRIX_MAGIC:
                    raise DataError(f"{path}: not an HLTF-BM1 matrix file")
                dims = np.fromfile(fh, dtype="<u4", count=2)
                (nnz,) = np.fromfile(fh, dtype="<u8", count=1)
                indptr = np.fromfile(fh, dtype="<u8", count=int(dims[0]) + 1)
                indices = np.fromfile(fh, dtype="<u4", count=int(nnz))
        except OSError as exc:
            raise DataError(f"cannot read matrix {path}: {exc}") from exc
        if len(indptr) != int(dims[0]) + 1 or len(indices) != int(nnz):
            raise DataError(f"{path}: truncated matrix file")
        if int(nnz) and indices.max() >= dims[1]:
            raise DataError(f"{path}: column index out of range")
        data = np.ones(int(nnz), dtype=np.uint8)
        csr = sp.csr_matrix(
            (data, indices.astype(np.int32), indptr.astype(np.int64)),
            shape=(int(dims[0]), int(dims[1])),
        )
        return cls(csr)


def to_binary_matrix(
    log: InteractionLog, vocab: Vocabulary | None = None
) -> tuple[BinaryMatrix, Vocabulary]:
    """Collapse an event log to a binary matrix plus its vocabulary.

    Without a preset vocabulary, tokens are indexed in sorted order. With
    one, events naming unknown tokens are dropped (count logged) — used to
    project later splits onto the training index space.
    """
    if vocab is None:
        if not log.events:
            raise DataError("cannot build a matrix from an empty log")
        users = sorted({ev.user for ev in log.events})
        items = sorted({ev.item for ev in log.events})
        vocab = Vocabulary(users=users, items=items)
        rows = [vocab.user_index[ev.user] for ev in log.events]
        cols = [vocab.item_index[ev.item] for ev in log.events]
    else:
        rows, cols, dropped = [], [], 0
        for ev in log.events:
            u = vocab.user_index.get(ev.user)
            i = vocab.item_index.get(ev.item)
            if u is None or i is None:
                dropped += 1
                continue
            rows.append(u)
            cols.append(i)
        if dropped:
            _logger.warning("dropped %d events outside the vocabulary", dropped)
    matrix = BinaryMatrix.from_pairs(
        vocab.n_users, vocab.n_items, np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)
    )
    return matrix, vocab


def project_items(matrix: BinaryMatrix, items: Iterable[int]) -> BinaryMatrix:
    """Restrict the matrix to an item subset.

    Users are unchanged; columns are reindexed in ascending original-index
    order, so callers can recover the mapping by sorting their item set.
    """
    cols = np.unique(np.asarray(list(items), dtype=np.int64))
    if cols.size == 0:
        raise DataError("cannot project onto an empty item set")
    if cols.min() < 0 or cols.max() >= matrix.n_items:
        raise DataError("projection item index out of range")
    return BinaryMatrix(matrix.csr()[:, cols].tocsr())
