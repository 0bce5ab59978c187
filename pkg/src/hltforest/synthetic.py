"""Seeded synthetic consumption corpora with known structure.

Used by the test suite to check structure recovery and re-ranking behaviour
against planted ground truth, and handy for demos. Everything is a pure
function of its seed.
"""

from __future__ import annotations

import numpy as np

from .data import BinaryMatrix
from .errors import ConfigError


def planted_flat(
    n_blocks: int = 4,
    block_size: int = 3,
    n_users: int = 2000,
    p_in: float = 0.8,
    p_out: float = 0.1,
    seed: int = 0,
) -> tuple[BinaryMatrix, np.ndarray]:
    """Items in co-consumption blocks; returns the matrix and block labels.

    Per user each block switches on with probability one half; items of an
    active block are consumed with ``p_in``, items of an inactive block with
    ``p_out``.
    """
    if not (0.0 < p_out < p_in < 1.0):
        raise ConfigError("need 0 < p_out < p_in < 1")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(n_blocks), block_size)
    n_items = n_blocks * block_size
    active = rng.random((n_users, n_blocks)) < 0.5
    p = np.where(active[:, labels], p_in, p_out)
    x = rng.random((n_users, n_items)) < p
    users, items = np.nonzero(x)
    return BinaryMatrix.from_pairs(n_users, n_items, users, items), labels


def planted_hierarchy(
    n_super: int = 2,
    blocks_per_super: int = 2,
    block_size: int = 3,
    n_users: int = 2000,
    p_in: float = 0.8,
    p_out: float = 0.1,
    seed: int = 0,
) -> tuple[BinaryMatrix, np.ndarray, np.ndarray]:
    """Two nested levels of co-consumption; returns matrix and both labels.

    Super-groups toggle per user with probability one half; blocks follow
    their super-group with ``p_in`` versus ``p_out``, and items follow their
    block the same way. Returned labels are per item: block index, then
    super-group index.
    """
    if not (0.0 < p_out < p_in < 1.0):
        raise ConfigError("need 0 < p_out < p_in < 1")
    rng = np.random.default_rng(seed)
    n_blocks = n_super * blocks_per_super
    block_labels = np.repeat(np.arange(n_blocks), block_size)
    super_of_block = np.repeat(np.arange(n_super), blocks_per_super)
    super_labels = super_of_block[block_labels]
    n_items = n_blocks * block_size
    super_active = rng.random((n_users, n_super)) < 0.5
    p_block = np.where(super_active[:, super_of_block], p_in, p_out)
    block_active = rng.random((n_users, n_blocks)) < p_block
    p_item = np.where(block_active[:, block_labels], p_in, p_out)
    x = rng.random((n_users, n_items)) < p_item
    users, items = np.nonzero(x)
    matrix = BinaryMatrix.from_pairs(n_users, n_items, users, items)
    return matrix, block_labels, super_labels


def planted_deep_hierarchy(
    n_top: int = 5,
    mids_per_top: int = 2,
    blocks_per_mid: int = 6,
    block_size: int = 10,
    n_users: int = 1000,
    p_in: float = 0.8,
    p_out: float = 0.1,
    act_hi: float = 0.9,
    act_lo: float = 0.02,
    p_leak: float = 0.02,
    seed: int = 0,
) -> tuple[BinaryMatrix, np.ndarray, np.ndarray, np.ndarray]:
    """Three nested levels of co-consumption with block-level popularity.

    Top groups toggle per user with probability one half and mid groups
    follow their top group with ``p_in`` versus ``p_out``. Each block then
    activates with its own popularity rate — geometrically decaying from
    ``act_hi`` to ``act_lo`` across blocks, ranks interleaved so every mid
    owns both popular and obscure blocks — damped by ``p_out / p_in`` when
    its mid is off. Items of an active block are consumed with ``p_in``,
    everything else with a flat ``p_leak``.

    Popularity lives in how often a block is activated rather than in
    per-item rates, so obscure blocks stay internally coherent (their few
    listeners still co-consume them densely) while their items are globally
    rare — unpersonalised rankings cover only part of the catalogue, leaving
    the tail blocks for category-aware re-ranking to surface. Returns the
    matrix plus per-item block, mid, and top labels.
    """
    if not (0.0 < p_out < p_in < 1.0):
        raise ConfigError("need 0 < p_out < p_in < 1")
    if not (0.0 < act_lo <= act_hi < 1.0):
        raise ConfigError("need 0 < act_lo <= act_hi < 1")
    if not 0.0 < p_leak < 1.0:
        raise ConfigError("need 0 < p_leak < 1")
    rng = np.random.default_rng(seed)
    n_mids = n_top * mids_per_top
    n_blocks = n_mids * blocks_per_mid
    block_labels = np.repeat(np.arange(n_blocks), block_size)
    mid_of_block = np.repeat(np.arange(n_mids), blocks_per_mid)
    top_of_mid = np.repeat(np.arange(n_top), mids_per_top)
    mid_labels = mid_of_block[block_labels]
    top_labels = top_of_mid[mid_labels]
    n_items = n_blocks * block_size
    # Interleave popularity ranks: sort by position-within-mid so rank r goes
    # to the r-th block of each mid in turn.
    pop_rank = np.empty(n_blocks, dtype=int)
    order = np.lexsort((np.arange(n_blocks), np.arange(n_blocks) % blocks_per_mid))
    pop_rank[order] = np.arange(n_blocks)
    base_act = np.geomspace(act_hi, act_lo, n_blocks)[pop_rank]
    top_active = rng.random((n_users, n_top)) < 0.5
    p_mid = np.where(top_active[:, top_of_mid], p_in, p_out)
    mid_active = rng.random((n_users, n_mids)) < p_mid
    damp = np.where(mid_active[:, mid_of_block], 1.0, p_out / p_in)
    block_active = rng.random((n_users, n_blocks)) < base_act[None, :] * damp
    p_item = np.where(block_active[:, block_labels], p_in, p_leak)
    x = rng.random((n_users, n_items)) < p_item
    users, items = np.nonzero(x)
    matrix = BinaryMatrix.from_pairs(n_users, n_items, users, items)
    return matrix, block_labels, mid_labels, top_labels


def multi_taste_corpus(
    n_users: int = 500,
    n_items: int = 300,
    n_tastes: int = 5,
    seed: int = 0,
    noise_scale: float = 0.25,
    holdout_fraction: float = 0.2,
) -> tuple[BinaryMatrix, dict[int, set[int]], np.ndarray]:
    """Users with a few item tastes of uneven popularity, plus held-out truth.

    Items split evenly into taste groups whose per-item consumption rates
    fall off group by group and steeply within each group, so unpersonalised
    rankings concentrate on a popular head. Each user draws two or three
    tastes (biased toward the popular ones), consumes inside them at the
    item's full rate, and everywhere else at ``noise_scale`` times the
    item's rate — out-of-taste listening skews to the same popular heads, as
    it does in real logs. A seeded fifth of each user's items is held out as
    truth; the rest is the training matrix. Returns the training matrix,
    per-user truth sets, and per-item taste labels.
    """
    if n_items % n_tastes != 0:
        raise ConfigError("n_items must divide evenly into taste groups")
    rng = np.random.default_rng(seed)
    group_size = n_items // n_tastes
    labels = np.repeat(np.arange(n_tastes), group_size)
    # popular tastes get picked more AND consumed more densely
    taste_weight = np.linspace(2.0, 0.5, n_tastes)
    taste_weight /= taste_weight.sum()
    in_rate = np.linspace(0.55, 0.3, n_tastes)
    # geometric head-to-tail popularity decay inside each group: heads are
    # consumed by most group members, tails by only a handful, so
    # unpersonalised rankings pile onto the heads
    decay = np.geomspace(1.6, 0.12, group_size)
    item_rate = in_rate[labels] * decay[np.arange(n_items) % group_size]

    train_users: list[int] = []
    train_items: list[int] = []
    truth: dict[int, set[int]] = {}
    for u in range(n_users):
        n_pick = 2 + int(rng.random() < 0.5)
        tastes = rng.choice(n_tastes, size=n_pick, replace=False, p=taste_weight)
        p = np.maximum(0.005, noise_scale * item_rate)
        for t in tastes:
            sel = labels == t
            p[sel] = item_rate[sel]
        consumed = np.flatnonzero(rng.random(n_items) < p)
        if len(consumed) < 2:
            consumed = rng.choice(n_items, size=2, replace=False)
            consumed.sort()
        n_hold = max(1, int(round(holdout_fraction * len(consumed))))
        held = rng.choice(len(consumed), size=n_hold, replace=False)
        mask = np.zeros(len(consumed), dtype=bool)
        mask[held] = True
        truth[u] = set(consumed[mask].tolist())
        kept = consumed[~mask]
        train_users.extend([u] * len(kept))
        train_items.extend(kept.tolist())
    matrix = BinaryMatrix.from_pairs(
        n_users, n_items, np.array(train_users), np.array(train_items)
    )
    return matrix, truth, labels
