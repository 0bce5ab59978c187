"""Ranking metrics and the base-versus-reranked experiment harness.

Accuracy is measured per user against held-out truth (precision/recall at a
cutoff); list diversity is measured across users as catalogue coverage and
mean pairwise list dissimilarity. Pair dissimilarity switches to seeded
sampling above a pair budget so big user sets stay tractable.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from ._rng import DOMAIN_PAIR_SAMPLING, stream
from .car import RerankedList, rerank
from .data import BinaryMatrix
from .errors import ConfigError, DataError
from .hierarchy import HierarchicalModel
from .recommenders import RankedList, Recommender

_logger = logging.getLogger(__name__)

DEFAULT_CUTOFF = 50
PAIR_BUDGET = 100_000

AnyList = RankedList | RerankedList


def _tops(lists: Sequence[AnyList], n: int) -> list[np.ndarray]:
    return [np.asarray(rl.items[:n], dtype=np.int64) for rl in lists]


def precision_at(
    lists: Sequence[AnyList], truth: Mapping[int, set[int]], n: int = DEFAULT_CUTOFF
) -> float:
    """Mean fraction of the top ``n`` that is in truth, over users with truth."""
    vals = []
    for rl, top in zip(lists, _tops(lists, n)):
        t = truth.get(rl.user)
        if not t:
            continue
        vals.append(sum(1 for it in top.tolist() if it in t) / n)
    if not vals:
        raise DataError("no user has a non-empty truth set")
    return float(np.mean(vals))


def recall_at(
    lists: Sequence[AnyList], truth: Mapping[int, set[int]], n: int = DEFAULT_CUTOFF
) -> float:
    """Mean fraction of truth recovered in the top ``n``, over users with truth."""
    vals = []
    for rl, top in zip(lists, _tops(lists, n)):
        t = truth.get(rl.user)
        if not t:
            continue
        vals.append(sum(1 for it in top.tolist() if it in t) / len(t))
    if not vals:
        raise DataError("no user has a non-empty truth set")
    return float(np.mean(vals))


def aggregate_diversity(lists: Sequence[AnyList], n: int = DEFAULT_CUTOFF) -> int:
    """Number of distinct items appearing in any user's top ``n``."""
    seen: set[int] = set()
    for top in _tops(lists, n):
        seen.update(top.tolist())
    return len(seen)


def dispersion(
    lists: Sequence[AnyList],
    n: int = DEFAULT_CUTOFF,
    pair_budget: int = PAIR_BUDGET,
    seed: int = 0,
) -> float:
    """Mean pairwise top-``n`` dissimilarity ``1 - |overlap| / n``.

    All user pairs are scored when their count fits the budget; otherwise a
    seeded uniform sample of pair indices (without replacement) is scored
    instead.
    """
    if pair_budget < 1:
        raise ConfigError("pair_budget must be at least 1")
    tops = [set(t.tolist()) for t in _tops(lists, n)]
    m = len(tops)
    if m < 2:
        raise DataError("dispersion needs at least two ranked lists")
    total = m * (m - 1) // 2
    if total <= pair_budget:
        pair_iter: Iterable[tuple[int, int]] = (
            (a, b) for a in range(m) for b in range(a + 1, m)
        )
        count = total
    else:
        rng = stream(seed, DOMAIN_PAIR_SAMPLING)
        chosen = rng.choice(total, size=pair_budget, replace=False)
        chosen.sort()
        # row a of the strict upper triangle starts at offset a*m - a*(a+1)/2 - a
        starts = np.cumsum(np.concatenate(([0], np.arange(m - 1, 0, -1))))
        rows = np.searchsorted(starts, chosen, side="right") - 1
        cols = chosen - starts[rows] + rows + 1
        pair_iter = zip(rows.tolist(), cols.tolist())
        count = pair_budget
        _logger.debug("dispersion: sampling %d of %d pairs", pair_budget, total)
    acc = 0.0
    for a, b in pair_iter:
        acc += 1.0 - len(tops[a] & tops[b]) / n
    return acc / count


@dataclass
class MetricRow:
    """One labelled evaluation of a set of ranked lists."""

    label: str
    cutoff: int
    precision: float
    recall: float
    diversity: int
    dispersion: float


def evaluate_lists(
    lists: Sequence[AnyList],
    truth: Mapping[int, set[int]],
    *,
    label: str,
    n: int = DEFAULT_CUTOFF,
    pair_budget: int = PAIR_BUDGET,
    seed: int = 0,
) -> MetricRow:
    return MetricRow(
        label=label,
        cutoff=n,
        precision=precision_at(lists, truth, n),
        recall=recall_at(lists, truth, n),
        diversity=aggregate_diversity(lists, n),
        dispersion=dispersion(lists, n, pair_budget, seed),
    )


def truncate_lists(lists: Sequence[RankedList], k: int) -> list[RankedList]:
    return [RankedList(rl.user, rl.items[:k], rl.scores[:k]) for rl in lists]


def run_experiment(
    train: BinaryMatrix,
    truth: Mapping[int, set[int]],
    model: HierarchicalModel,
    recommenders: Mapping[str, Recommender],
    *,
    k: int = DEFAULT_CUTOFF,
    alpha: int = 5,
    level: int = 1,
    pool_factor: int = 4,
    seed: int = 0,
    pair_budget: int = PAIR_BUDGET,
) -> list[MetricRow]:
    """Score every base recommender and its category-aware re-ranking.

    Each recommender is fit on the training matrix, asked for a candidate
    pool ``pool_factor * k`` deep, and evaluated twice: the plain head of
    the pool, and the pool re-ranked through the model at the given level.
    Users without truth are skipped entirely.
    """
    users = sorted(u for u, t in truth.items() if t)
    if not users:
        raise DataError("no user has a non-empty truth set")
    rows: list[MetricRow] = []
    for name, rec in recommenders.items():
        rec.fit(train)
        pool = rec.recommend(users, k * pool_factor)
        base = truncate_lists(pool, k)
        rows.append(
            evaluate_lists(base, truth, label=name, n=k, pair_budget=pair_budget, seed=seed)
        )
        reranked = [rerank(rl, model, train.row_items(rl.user), k, alpha, level) for rl in pool]
        rows.append(
            evaluate_lists(
                reranked, truth, label=f"{name}+car", n=k, pair_budget=pair_budget, seed=seed
            )
        )
    return rows


def level_sweep(
    train: BinaryMatrix,
    truth: Mapping[int, set[int]],
    model: HierarchicalModel,
    recommender: Recommender,
    *,
    k: int = DEFAULT_CUTOFF,
    alpha: int = 5,
    pool_factor: int = 4,
    seed: int = 0,
    pair_budget: int = PAIR_BUDGET,
) -> list[MetricRow]:
    """Re-rank one recommender at every level, top of the hierarchy first.

    Walking from the coarse top layer down to level 1 makes the quota
    categories progressively more specific; rows come back in sweep order
    labelled ``level-<l>``.
    """
    users = sorted(u for u, t in truth.items() if t)
    if not users:
        raise DataError("no user has a non-empty truth set")
    recommender.fit(train)
    pool = recommender.recommend(users, k * pool_factor)
    rows = []
    for level in range(model.depth, 0, -1):
        reranked = [rerank(rl, model, train.row_items(rl.user), k, alpha, level) for rl in pool]
        rows.append(
            evaluate_lists(
                reranked,
                truth,
                label=f"level-{level}",
                n=k,
                pair_budget=pair_budget,
                seed=seed,
            )
        )
    return rows


def write_report(target: str | os.PathLike | IO[str], rows: Sequence[MetricRow]) -> None:
    """Tab-separated metric report, one row per evaluated list set."""

    def emit(fh: IO[str]) -> None:
        fh.write("label\tcutoff\tprecision\trecall\tdiversity\tdispersion\n")
        for r in rows:
            fh.write(
                f"{r.label}\t{r.cutoff}\t{r.precision:.17g}\t{r.recall:.17g}"
                f"\t{r.diversity}\t{r.dispersion:.17g}\n"
            )

    if hasattr(target, "write"):
        emit(target)  # type: ignore[arg-type]
    else:
        with open(target, "w", encoding="utf-8") as fh:
            emit(fh)


def read_report(source: str | os.PathLike | IO[str]) -> list[MetricRow]:
    def parse(fh: IO[str]) -> list[MetricRow]:
        header = fh.readline().rstrip("\n").split("\t")
        expected = ["label", "cutoff", "precision", "recall", "diversity", "dispersion"]
        if header != expected:
            raise DataError("unrecognized report header")
        rows = []
        for ln, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 6:
                raise DataError(f"report line {ln}: expected 6 fields")
            rows.append(
                MetricRow(
                    label=parts[0],
                    cutoff=int(parts[1]),
                    precision=float(parts[2]),
                    recall=float(parts[3]),
                    diversity=int(parts[4]),
                    dispersion=float(parts[5]),
                )
            )
        return rows

    if hasattr(source, "read"):
        return parse(source)  # type: ignore[arg-type]
    with open(source, "r", encoding="utf-8") as fh:
        return parse(fh)
