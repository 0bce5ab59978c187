"""Base recommenders producing deterministic ranked item lists.

Four standard implicit-feedback scorers: global popularity, item-item and
user-user cosine neighborhoods, and weighted alternating-least-squares
matrix factorization. All ranking is tie-broken by ascending item index so
repeated runs emit byte-identical lists.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass
from typing import IO, Iterable

import numpy as np
import scipy.sparse as sp

from ._rng import DOMAIN_FACTORS, stream
from .data import BinaryMatrix, Vocabulary
from .errors import ConfigError, DataError
from .similarity import cosine_item_pairs

_logger = logging.getLogger(__name__)


@dataclass
class RankedList:
    """One user's recommendations, best first."""

    user: int
    items: np.ndarray
    scores: np.ndarray

    def __len__(self) -> int:
        return len(self.items)


def _top_k_row(scores: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Highest-scoring finite entries, ties to the lowest index."""
    candidates = np.flatnonzero(np.isfinite(scores))
    if len(candidates) > k:
        # keep everything tied with the k-th largest, then sort exactly
        cut = np.partition(scores[candidates], len(candidates) - k)[len(candidates) - k]
        candidates = candidates[scores[candidates] >= cut]
    order = np.lexsort((candidates, -scores[candidates]))[:k]
    chosen = candidates[order]
    return chosen, scores[chosen]


class Recommender:
    """Shared batch scoring and ranking loop."""

    def fit(self, matrix: BinaryMatrix) -> "Recommender":
        raise NotImplementedError

    def _score_block(self, users: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _require_fit(self) -> BinaryMatrix:
        matrix = getattr(self, "_matrix", None)
        if matrix is None:
            raise DataError("recommender is not fitted")
        return matrix

    def recommend(
        self,
        users: Iterable[int] | np.ndarray,
        k: int,
        exclude_consumed: bool = True,
    ) -> list[RankedList]:
        if k < 1:
            raise ConfigError("k must be at least 1")
        matrix = self._require_fit()
        users = np.asarray(list(users) if not isinstance(users, np.ndarray) else users)
        if users.size and (users.min() < 0 or users.max() >= matrix.n_users):
            raise DataError("user index outside the training matrix")
        out: list[RankedList] = []
        batch = 1024
        for start in range(0, len(users), batch):
            block_users = users[start : start + batch]
            scores = self._score_block(block_users)
            if exclude_consumed:
                for r, u in enumerate(block_users):
                    scores[r, matrix.row_items(int(u))] = -np.inf
            for r, u in enumerate(block_users):
                items, vals = _top_k_row(scores[r], k)
                out.append(RankedList(int(u), items, vals))
        return out


class PopularityRecommender(Recommender):
    """Ranks every user by global item consumption counts."""

    def fit(self, matrix: BinaryMatrix) -> "PopularityRecommender":
        self._matrix = matrix
        self._counts = matrix.item_counts().astype(np.float64)
        return self

    def _score_block(self, users: np.ndarray) -> np.ndarray:
        return np.tile(self._counts, (len(users), 1))


class ItemKNNRecommender(Recommender):
    """Item-item cosine neighborhood scorer.

    Each item keeps its ``n_neighbors`` most similar items (ties to the
    lower index); a user's score for an item sums the kept similarities of
    the user's consumed items. Users with no training history fall back to
    popularity.
    """

    def __init__(self, n_neighbors: int = 50, max_user_items: int = 10_000):
        if n_neighbors < 1:
            raise ConfigError("n_neighbors must be at least 1")
        self.n_neighbors = n_neighbors
        self.max_user_items = max_user_items

    def fit(self, matrix: BinaryMatrix) -> "ItemKNNRecommender":
        self._matrix = matrix
        self._counts = matrix.item_counts().astype(np.float64)
        sim = cosine_item_pairs(matrix, max_user_items=self.max_user_items)
        rows, cols, vals = [], [], []
        for item in range(matrix.n_items):
            nbr, v = sim.neighbors(item)
            if len(nbr) > self.n_neighbors:
                order = np.lexsort((nbr, -v))[: self.n_neighbors]
                nbr, v = nbr[order], v[order]
            # scores = R @ M needs M[j, i] = sim(i, j) for j in i's kept set
            rows.append(nbr)
            cols.append(np.full(len(nbr), item))
            vals.append(v)
        self._M = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(matrix.n_items, matrix.n_items),
        )
        return self

    def _score_block(self, users: np.ndarray) -> np.ndarray:
        R = self._matrix.csr()[users].astype(np.float64)
        scores = np.asarray((R @ self._M).todense())
        cold = np.diff(self._matrix.csr()[users].indptr) == 0
        if cold.any():
            scores[cold] = self._counts
        return scores


class UserKNNRecommender(Recommender):
    """User-user cosine neighborhood scorer.

    Scores are the neighbor-similarity-weighted sum of the ``n_neighbors``
    most similar users' rows (positive similarities only, ties to the lower
    user index). Users with no training history fall back to popularity.
    """

    def __init__(self, n_neighbors: int = 50):
        if n_neighbors < 1:
            raise ConfigError("n_neighbors must be at least 1")
        self.n_neighbors = n_neighbors

    def fit(self, matrix: BinaryMatrix) -> "UserKNNRecommender":
        self._matrix = matrix
        self._counts = matrix.item_counts().astype(np.float64)
        R = matrix.csr().astype(np.float64)
        norms = np.sqrt(np.asarray(R.multiply(R).sum(axis=1)).ravel())
        inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
        self._normalized = sp.diags(inv) @ R
        return self

    def _score_block(self, users: np.ndarray) -> np.ndarray:
        Un = self._normalized
        sims = np.asarray((Un[users] @ Un.T).todense())
        for r, u in enumerate(users):
            sims[r, int(u)] = 0.0
        n_users = sims.shape[1]
        k = min(self.n_neighbors, n_users)
        weights = sp.lil_matrix(sims.shape)
        for r in range(sims.shape[0]):
            row = sims[r]
            idx = np.flatnonzero(row > 0)
            if len(idx) > k:
                order = np.lexsort((idx, -row[idx]))[:k]
                idx = idx[order]
            weights[r, idx] = row[idx]
        scores = np.asarray((weights.tocsr() @ self._matrix.csr().astype(np.float64)).todense())
        cold = np.diff(self._matrix.csr()[users].indptr) == 0
        if cold.any():
            scores[cold] = self._counts
        return scores


class WRMFRecommender(Recommender):
    """Weighted matrix factorization for implicit feedback, fit by ALS.

    Consumed cells carry confidence ``1 + c_weight``; everything else weight
    one with preference zero. Factors start from a seeded small-normal draw
    so training is reproducible. A singular normal system aborts with a
    diagnostic rather than producing NaN factors.
    """

    def __init__(
        self,
        n_factors: int = 32,
        regularization: float = 0.01,
        c_weight: float = 40.0,
        n_iterations: int = 15,
        seed: int = 0,
    ):
        if n_factors < 1:
            raise ConfigError("n_factors must be at least 1")
        if regularization <= 0:
            raise ConfigError("regularization must be positive")
        if c_weight < 0:
            raise ConfigError("c_weight must be non-negative")
        if n_iterations < 1:
            raise ConfigError("n_iterations must be at least 1")
        self.n_factors = n_factors
        self.regularization = regularization
        self.c_weight = c_weight
        self.n_iterations = n_iterations
        self.seed = seed

    def objective(self) -> float:
        """Weighted squared loss plus L2 penalty for the current factors.

        The all-pairs term folds into ``trace((XtX)(YtY))`` so evaluation
        never materializes the dense score matrix.
        """
        matrix = self._require_fit()
        X, Y = self._user_factors, self._item_factors
        total = float(np.sum((X.T @ X) * (Y.T @ Y)))
        alpha = self.c_weight
        csr = matrix.csr()
        for u in range(matrix.n_users):
            items = csr.indices[csr.indptr[u] : csr.indptr[u + 1]]
            if len(items) == 0:
                continue
            s = Y[items] @ X[u]
            total += float(np.sum((1.0 + alpha) * (1.0 - s) ** 2 - s**2))
        total += self.regularization * (float(np.sum(X**2)) + float(np.sum(Y**2)))
        return total

    def _solve_side(
        self, holder: BinaryMatrix, fixed: np.ndarray, rows_are_users: bool
    ) -> np.ndarray:
        f = self.n_factors
        alpha = self.c_weight
        gram = fixed.T @ fixed + self.regularization * np.eye(f)
        count = holder.n_users if rows_are_users else holder.n_items
        out = np.empty((count, f))
        mat = holder.csr() if rows_are_users else holder.csc()
        for r in range(count):
            members = mat.indices[mat.indptr[r] : mat.indptr[r + 1]]
            if len(members) == 0:
                out[r] = 0.0
                continue
            F = fixed[members]
            A = gram + alpha * (F.T @ F)
            b = (1.0 + alpha) * F.sum(axis=0)
            try:
                out[r] = np.linalg.solve(A, b)
            except np.linalg.LinAlgError as exc:
                side = "user" if rows_are_users else "item"
                raise DataError(
                    f"normal equations singular while solving {side} {r} "
                    f"(factors={f}, regularization={self.regularization}); "
                    "increase regularization"
                ) from exc
        return out

    def fit(self, matrix: BinaryMatrix) -> "WRMFRecommender":
        self._matrix = matrix
        rng_u = stream(self.seed, DOMAIN_FACTORS, 0)
        rng_i = stream(self.seed, DOMAIN_FACTORS, 1)
        self._user_factors = rng_u.normal(size=(matrix.n_users, self.n_factors)) * 0.01
        self._item_factors = rng_i.normal(size=(matrix.n_items, self.n_factors)) * 0.01
        for it in range(self.n_iterations):
            self._user_factors = self._solve_side(matrix, self._item_factors, True)
            self._item_factors = self._solve_side(matrix, self._user_factors, False)
            _logger.debug("wrmf sweep %d/%d done", it + 1, self.n_iterations)
        return self

    def _score_block(self, users: np.ndarray) -> np.ndarray:
        return self._user_factors[users] @ self._item_factors.T


# -- ranked list files ----------------------------------------------------------


def write_ranked_lists(
    target: str | os.PathLike | IO[str],
    lists: Iterable[RankedList],
    vocab: Vocabulary | None = None,
) -> None:
    """Tab-separated ``user item score rank`` rows, rank starting at 1."""

    def emit(fh: IO[str]) -> None:
        for rl in lists:
            user = vocab.users[rl.user] if vocab is not None else str(rl.user)
            for rank, (item, score) in enumerate(zip(rl.items, rl.scores), start=1):
                token = vocab.items[int(item)] if vocab is not None else str(int(item))
                fh.write(f"{user}\t{token}\t{score:.17g}\t{rank}\n")

    if hasattr(target, "write"):
        emit(target)  # type: ignore[arg-type]
    else:
        with open(target, "w", encoding="utf-8") as fh:
            emit(fh)


def read_ranked_lists(
    source: str | os.PathLike | IO[str],
    vocab: Vocabulary | None = None,
) -> list[RankedList]:
    """Parse ranked-list rows back, validating rank continuity per user."""

    def parse(fh: IO[str]) -> list[RankedList]:
        per_user: dict[int, list[tuple[int, float, int]]] = {}
        order: list[int] = []
        for ln, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DataError(f"ranked list line {ln}: expected 4 fields")
            try:
                user = vocab.user_index[parts[0]] if vocab is not None else int(parts[0])
                item = vocab.item_index[parts[1]] if vocab is not None else int(parts[1])
                score = float(parts[2])
                rank = int(parts[3])
            except (KeyError, ValueError) as exc:
                raise DataError(f"ranked list line {ln}: {exc}") from exc
            if not math.isfinite(score):
                raise DataError(f"ranked list line {ln}: non-finite score")
            if user not in per_user:
                order.append(user)
            per_user.setdefault(user, []).append((item, score, rank))
        out = []
        for user in order:
            rows = per_user[user]
            ranks = [r for _, _, r in rows]
            if ranks != list(range(1, len(rows) + 1)):
                raise DataError(f"user {user}: ranks are not 1..{len(rows)}")
            out.append(
                RankedList(
                    user,
                    np.array([i for i, _, _ in rows], dtype=np.int64),
                    np.array([s for _, s, _ in rows]),
                )
            )
        return out

    if hasattr(source, "read"):
        return parse(source)  # type: ignore[arg-type]
    with open(source, "r", encoding="utf-8") as fh:
        return parse(fh)
