"""Flat layer learning: partitioning items into latent categories.

Grows one category at a time from a random seed item: repeatedly pulls in
the candidate most similar to the growing member set, then asks whether one
latent still explains the enlarged set or a second latent over the newest
pair fits better by a BIC margin (the unidimensionality test). When two
latents win, the foreign pair is pushed back into the pool and the kept
subtree becomes the category. The layer loop repeats until every item is
owned by exactly one category.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from ._rng import DOMAIN_CATEGORY, stream
from .data import BinaryMatrix
from .errors import ConfigError
from .similarity import CandidateTracker, SparseSimilarity, closest_in_set, cosine_item_pairs
from .trees import (
    Category,
    TreeModel,
    _gather,
    _run_em_aligned,
    bic,
    canonical_orientation,
    learn_lcm,
)

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LearnerConfig:
    """Knobs for category growth.

    split_threshold: BIC margin the two-latent variant must clear for the
        unidimensionality test to split off the newest pair.
    max_category_size: stop growing once the member set reaches this size
        (the returned category can hold one more item, the one in flight).
    em_steps: EM iterations for freshly learned / finalized categories.
    local_em_steps: EM iterations over only the new tables of a two-latent
        variant during the test.
    """

    split_threshold: float = 3.0
    max_category_size: int = 10
    em_steps: int = 10
    seed: int = 0
    local_em_steps: int = 5

    def __post_init__(self) -> None:
        if not math.isfinite(self.split_threshold):
            raise ConfigError("split_threshold must be finite")
        if self.max_category_size < 3:
            raise ConfigError("max_category_size must be at least 3")
        if self.em_steps < 1:
            raise ConfigError("em_steps must be at least 1")
        if self.local_em_steps < 1:
            raise ConfigError("local_em_steps must be at least 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


@dataclass
class FlatForest:
    """One learned layer: categories partitioning the layer's columns."""

    categories: list[Category]
    level: int
    n_items: int
    ownership: np.ndarray = field(init=False)  # column -> category index

    def __post_init__(self) -> None:
        owner = np.full(self.n_items, -1, dtype=np.int64)
        for ci, cat in enumerate(self.categories):
            if np.any(owner[cat.items] >= 0):
                raise ValueError("categories overlap")
            owner[cat.items] = ci
        if np.any(owner < 0):
            raise ValueError("categories do not cover every column")
        self.ownership = owner

    @property
    def n_categories(self) -> int:
        return len(self.categories)


def extend_with_item(
    category: Category,
    data: BinaryMatrix | np.ndarray,
    item: int,
    local_em_steps: int = 5,
) -> Category:
    """Attach one item as a new child, keeping existing tables frozen.

    Only the new child's table is fit, by a short local EM from a flat
    start (a flat table leaves the posterior untouched, so the first step
    equals estimating from smoothed expected counts under the category's
    current posterior; later steps let the item's own evidence sharpen it).
    Every pre-existing table entry is bit-identical afterwards.
    """
    k = category.size
    items = np.concatenate([category.items, [int(item)]])
    tables = np.vstack([category.child_tables(), [0.5, 0.5]])
    level = int(category.levels[category.latent])
    extended = Category(items, category.prior, tables, level)
    Xm = _gather(extended, data)
    fitted = _run_em_aligned(extended, Xm, local_em_steps, update={k})
    return Category(items, category.prior, np.stack(fitted.tables[: k + 1]), level)


def two_latent_variant(
    category: Category,
    drop_item: int,
    new_item: int,
    data: BinaryMatrix | np.ndarray,
    rng: np.random.Generator,
    local_em_steps: int = 5,
) -> TreeModel:
    """Two-latent alternative for the unidimensionality test.

    The root latent keeps the category's remaining children with frozen
    tables; a second latent hangs off it owning (drop_item, new_item). Only
    the three new tables — pair children and the latent-latent edge — are
    fit, by a short local EM. Parameter count is the single-latent
    extension's plus exactly 2.
    """
    keep_pos = [j for j in range(category.size) if int(category.items[j]) != int(drop_item)]
    if len(keep_pos) == category.size:
        raise ValueError("drop_item is not a member of the category")
    k = len(keep_pos)
    keep_items = category.items[keep_pos]
    keep_tables = category.child_tables()[keep_pos]

    # starting point for the pair: the dropped child's existing table, then
    # randomly oriented (but decisively asymmetric) tables for the incoming
    # item and the latent-latent edge — a near-flat start can stall the short
    # local EM on the saddle where the second latent explains nothing
    drop_pos = [j for j in range(category.size) if int(category.items[j]) == int(drop_item)][0]
    w_init = category.child_tables()[drop_pos]
    x_init = np.array([0.2, 0.8]) if rng.random() < 0.5 else np.array([0.8, 0.2])
    z2_init = np.array([0.2, 0.8]) if rng.random() < 0.5 else np.array([0.8, 0.2])

    z = k + 2
    z2 = k + 3
    parent = [z] * k + [z2, z2, -1, z]
    tables = (
        [keep_tables[j] for j in range(k)]
        + [w_init, x_init, np.array([category.prior]), z2_init]
    )
    columns = np.concatenate([keep_items, [int(drop_item), int(new_item)]])
    levels = [0] * (k + 2) + [1, 1]
    model = TreeModel(parent, tables, n_obs=k + 2, columns=columns, levels=levels)
    Xm = _gather(model, data)
    return _run_em_aligned(model, Xm, local_em_steps, update={k, k + 1, z2})


def extract_root_category(model: TreeModel, n_keep: int, level: int) -> Category:
    """Keep-subtree of a two-latent model: root latent + its item children."""
    z = n_keep + 2
    return Category(
        model.columns[:n_keep],
        float(model.tables[z][0]),
        np.stack([model.tables[j] for j in range(n_keep)]),
        level,
    )


def _em_category(cat: Category, data: BinaryMatrix | np.ndarray, steps: int) -> Category:
    fitted = _run_em_aligned(cat, _gather(cat, data), steps)
    return Category(
        cat.items,
        float(fitted.tables[cat.latent][0]),
        np.stack([fitted.tables[j] for j in range(cat.size)]),
        int(cat.levels[cat.latent]),
    )


def grow_category(
    matrix: BinaryMatrix,
    pool: Iterable[int],
    config: LearnerConfig,
    sim: SparseSimilarity,
    rng: np.random.Generator,
    level: int = 1,
) -> Category:
    """Grow one category from the pool; claimed items = the returned children.

    Pools of three or fewer items become a single category outright. A seed
    whose similarity to every candidate is zero becomes a singleton (orphan
    items each end up in their own category). Mid-growth, a zero-similarity
    round falls back to the lowest-index candidate and the
    unidimensionality test decides whether it stays.
    """
    pool_sorted = sorted(int(i) for i in pool)
    if not pool_sorted:
        raise ValueError("empty pool")
    if len(pool_sorted) <= 3:
        return learn_lcm(matrix, pool_sorted, config.em_steps, rng, level)

    seed_item = int(rng.choice(pool_sorted))
    tracker = CandidateTracker(sim, (i for i in pool_sorted if i != seed_item))
    tracker.add_member(seed_item)
    first = tracker.best()
    if first is None:
        return learn_lcm(matrix, [seed_item], config.em_steps, rng, level)

    members = [seed_item, first]
    tracker.remove(first)
    cat = learn_lcm(matrix, members, config.em_steps, rng, level)

    while True:
        cand = tracker.best()
        if cand is None:
            cand = tracker.lowest_index()
        nearest = closest_in_set(members, cand, sim)
        extended = extend_with_item(cat, matrix, cand, config.local_em_steps)
        tracker.remove(cand)
        # the split test runs even for the last candidate: a pool's final two
        # items may be exactly the foreign pair that belongs elsewhere
        variant = two_latent_variant(cat, nearest, cand, matrix, rng, config.local_em_steps)
        if bic(variant, matrix) - bic(extended, matrix) > config.split_threshold:
            refined = run_em_full(variant, matrix, config.em_steps)
            kept = extract_root_category(refined, variant.n_obs - 2, level)
            return canonical_orientation(kept)
        if len(tracker) == 0:
            return canonical_orientation(extended)
        if len(members) >= config.max_category_size:
            return canonical_orientation(_em_category(extended, matrix, config.em_steps))
        cat = extended
        members.append(cand)
        tracker.add_member(cand)


def run_em_full(model: TreeModel, data: BinaryMatrix | np.ndarray, steps: int) -> TreeModel:
    """Full EM over all of the model's own tables (never a stacked model)."""
    return _run_em_aligned(model, _gather(model, data), steps)


def learn_flat_forest(
    matrix: BinaryMatrix,
    config: LearnerConfig,
    sim: SparseSimilarity | None = None,
    level: int = 1,
) -> FlatForest:
    """Partition every column of the matrix into latent categories.

    Each category draws from its own counter-keyed random stream, so results
    are identical for a fixed config regardless of how many layers or runs
    came before.
    """
    if sim is None:
        sim = cosine_item_pairs(matrix, allow_empty_columns=level > 1)
    pool = set(range(matrix.n_items))
    categories: list[Category] = []
    while pool:
        rng = stream(config.seed, DOMAIN_CATEGORY, level, len(categories))
        cat = grow_category(matrix, pool, config, sim, rng, level)
        claimed = set(int(i) for i in cat.items)
        if not claimed or not claimed <= pool:
            raise RuntimeError("category claimed items outside the pool")
        pool -= claimed
        categories.append(cat)
    _logger.debug("layer %d: %d categories over %d columns", level, len(categories), matrix.n_items)
    return FlatForest(categories=categories, level=level, n_items=matrix.n_items)
