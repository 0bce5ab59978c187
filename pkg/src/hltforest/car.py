"""Category-aware re-ranking and recommendation explanations.

A base recommender's ranked list is re-ordered so that the categories a user
actually consumes receive slots proportional to their share of the user's
history, which lifts list diversity while staying close to the base ordering.
Each recommended item can also be explained by its learned category and that
category's representative items.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .data import BinaryMatrix, Vocabulary
from .errors import ConfigError, DataError
from .hierarchy import HierarchicalModel, NodeRef, node_id, representatives
from .recommenders import RankedList

STAGE_QUOTA = "quota"
STAGE_FILL = "fill"
STAGE_RELAX = "relax"


def category_counts(
    model: HierarchicalModel, history: Sequence[int] | np.ndarray, level: int = 1
) -> list[tuple[int, int]]:
    """Per-category consumption counts of a user's history, largest first.

    Every category at the level appears, zero-count ones included; ties
    break to the lower category index, so an empty history comes back as an
    all-zero vector in category order.
    """
    comp = model.composed_ownership(level)
    items = np.asarray(history, dtype=np.int64)
    if items.size and (items.min() < 0 or items.max() >= len(comp)):
        raise DataError("consumed item outside the model's catalogue")
    counts = np.bincount(comp[items], minlength=model.layer(level).n_categories)
    order = np.lexsort((np.arange(len(counts)), -counts))
    return [(int(c), int(counts[c])) for c in order]


@dataclass
class AllocationPlan:
    """Per-category slot quotas plus the set of covered categories."""

    quotas: list[tuple[int, int]] = field(default_factory=list)  # (category, slots)
    covered: set[int] = field(default_factory=set)
    total_items: int = 0

    @property
    def n_slots(self) -> int:
        return sum(r for _, r in self.quotas)


def allocate(counts: Sequence[tuple[int, int]], k: int, alpha: int) -> AllocationPlan:
    """Proportional quota assignment over sufficiently frequent categories.

    ``counts`` must be sorted by descending count. Scanning stops at the
    first category with fewer than ``alpha`` members; every category seen
    before that point is covered (kept in the covered set even when its
    integer quota rounds to zero). Quotas are ``count * k // total`` with
    ``total`` the full item count, so they never oversubscribe ``k``.
    """
    if k < 1:
        raise ConfigError("k must be at least 1")
    if alpha < 0:
        raise ConfigError("alpha must be non-negative")
    total = sum(n for _, n in counts)
    plan = AllocationPlan(total_items=total)
    if total == 0:
        return plan
    last = None
    for cat, n in counts:
        if last is not None and n > last:
            raise DataError("category counts must be sorted by descending count")
        last = n
        if n < alpha:
            break
        plan.quotas.append((cat, n * k // total))
        plan.covered.add(cat)
    return plan


@dataclass
class RerankedList:
    """A re-ranked list plus the admission stage of every kept item."""

    user: int
    items: np.ndarray
    scores: np.ndarray
    stages: list[str]

    def __len__(self) -> int:
        return len(self.items)


def rerank(
    base: RankedList,
    model: HierarchicalModel,
    history: Sequence[int] | np.ndarray,
    k: int,
    alpha: int,
    level: int = 1,
) -> RerankedList:
    """Re-rank a base list to mirror the user's per-category consumption.

    Items move only between positions; nothing outside the base list can
    enter. Quota slots go to the user's heaviest categories in plan order,
    each filled with that category's base-order top items; leftover
    positions take items whose category the user consumed but that got no
    quota, then quota categories' overflow, then whatever is left, so the
    output always reaches ``min(k, len(base))``. An empty plan (no category
    passes ``alpha``) returns the base head unchanged.
    """
    comp = model.composed_ownership(level)
    items = base.items
    if items.size and (items.min() < 0 or items.max() >= len(comp)):
        raise DataError("ranked item outside the model's catalogue")
    out_len = min(k, len(items))
    counts = category_counts(model, history, level)
    plan = allocate(counts, k, alpha)
    consumed = {cat for cat, n in counts if n > 0}
    score_of = {int(it): float(s) for it, s in zip(items, base.scores)}

    chosen: list[int] = []
    stages: list[str] = []
    taken: set[int] = set()

    if plan.quotas:
        by_cat: dict[int, list[int]] = {}
        for it in items.tolist():
            by_cat.setdefault(int(comp[it]), []).append(it)
        for cat, slots in plan.quotas:
            for it in by_cat.get(cat, [])[:slots]:
                if len(chosen) == out_len:
                    break
                chosen.append(it)
                stages.append(STAGE_QUOTA)
                taken.add(it)
        passes = (
            (STAGE_FILL, lambda c: c not in plan.covered and c in consumed),
            (STAGE_RELAX, lambda c: c in plan.covered),
            (STAGE_RELAX, lambda c: True),
        )
        for tag, admits in passes:
            for it in items.tolist():
                if len(chosen) == out_len:
                    break
                if it in taken or not admits(int(comp[it])):
                    continue
                chosen.append(it)
                stages.append(tag)
                taken.add(it)
    else:
        for it in items.tolist()[:out_len]:
            chosen.append(it)
            stages.append(STAGE_FILL)

    arr = np.array(chosen, dtype=np.int64)
    return RerankedList(
        base.user,
        arr,
        np.array([score_of[it] for it in chosen]),
        stages,
    )


def _user_history(
    histories: BinaryMatrix | Mapping[int, Sequence[int]], user: int
) -> Sequence[int] | np.ndarray:
    if isinstance(histories, BinaryMatrix):
        return histories.row_items(user)
    return histories.get(user, ())


def rerank_all(
    lists: Iterable[RankedList],
    model: HierarchicalModel,
    histories: BinaryMatrix | Mapping[int, Sequence[int]],
    k: int,
    alpha: int,
    level: int = 1,
) -> list[RerankedList]:
    return [rerank(rl, model, _user_history(histories, rl.user), k, alpha, level) for rl in lists]


@dataclass
class Explanation:
    item: int
    category: NodeRef
    reps: list[tuple[int, float]]
    context: NodeRef | None = None


def explain(
    model: HierarchicalModel,
    item: int,
    reps_per_node: int = 3,
    context_level: int | None = None,
) -> Explanation:
    """Explain one item by its category and the category's representatives.

    The item itself never appears among its own representatives. When a
    context level is given, the owning ancestor at that level is attached
    for breadcrumb-style display.
    """
    if not 0 <= item < model.n_items:
        raise DataError(f"item {item} outside the model's catalogue")
    cat = int(model.composed_ownership(1)[item])
    reps = [
        (it, mi)
        for it, mi in representatives(model, (1, cat), reps_per_node + 1)
        if it != item
    ][:reps_per_node]
    context = None
    if context_level is not None:
        if not 1 <= context_level <= model.depth:
            raise ConfigError(f"context level {context_level} outside 1..{model.depth}")
        context = (context_level, int(model.composed_ownership(context_level)[item]))
    return Explanation(item, (1, cat), reps, context)


def write_explanations(
    target: str | os.PathLike | IO[str],
    lists: Iterable[RankedList | RerankedList],
    model: HierarchicalModel,
    vocab: Vocabulary | None = None,
    reps_per_node: int = 3,
    context_level: int | None = None,
) -> None:
    """Explanation sidecar: ``user item category_id rep1|rep2|...`` rows.

    Rows follow list order, so the sidecar lines up one-to-one with the
    ranked-list file it accompanies.
    """

    def fmt_item(i: int) -> str:
        return vocab.items[i] if vocab is not None else str(i)

    def fmt_user(u: int) -> str:
        return vocab.users[u] if vocab is not None else str(u)

    def emit(fh: IO[str]) -> None:
        for rl in lists:
            for it in rl.items.tolist():
                ex = explain(model, int(it), reps_per_node, context_level)
                reps = "|".join(fmt_item(r) for r, _ in ex.reps)
                fields = [fmt_user(rl.user), fmt_item(int(it)), node_id(*ex.category), reps]
                if ex.context is not None:
                    fields.append(node_id(*ex.context))
                fh.write("\t".join(fields) + "\n")

    if hasattr(target, "write"):
        emit(target)  # type: ignore[arg-type]
    else:
        with open(target, "w", encoding="utf-8") as fh:
            emit(fh)
