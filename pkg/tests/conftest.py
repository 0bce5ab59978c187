"""Shared fixtures.

The expensive fixtures (learned models) are session-scoped; tests must not
mutate them. Everything here is seeded so the whole suite is reproducible.
"""

from __future__ import annotations

import numpy as np
import pytest

from hltforest import (
    BinaryMatrix,
    Category,
    LearnerConfig,
    TreeModel,
    learn_hierarchy,
)
from hltforest.synthetic import planted_flat, planted_hierarchy


@pytest.fixture
def tiny_matrix() -> BinaryMatrix:
    """Four users, three items, hand-checkable counts.

    rows: u0={0,1}, u1={0}, u2={1,2}, u3={2}
    """
    users = np.array([0, 0, 1, 2, 2, 3])
    items = np.array([0, 1, 0, 1, 2, 2])
    return BinaryMatrix.from_pairs(4, 3, users, items)


@pytest.fixture
def pair_category() -> Category:
    """One latent over items {0, 1} with distinct, asymmetric tables."""
    return Category(
        items=np.array([0, 1]),
        prior=0.75,
        child_tables=np.array([[0.2, 0.9], [0.4, 0.6]]),
    )


@pytest.fixture
def chain_model() -> TreeModel:
    """Latent root (id 2) over two observed items (single tree)."""
    return TreeModel(
        parent=[2, 2, -1],
        tables=[np.array([0.2, 0.9]), np.array([0.4, 0.6]), np.array([0.75])],
        n_obs=2,
    )


def random_forest_model(
    rng: np.random.Generator, n_items: int, max_tree: int = 4
) -> TreeModel:
    """A random forest of single-latent trees over ``n_items`` observed columns."""
    sizes: list[int] = []
    left = n_items
    while left:
        size = int(rng.integers(1, min(max_tree, left) + 1))
        sizes.append(size)
        left -= size
    parent = np.empty(n_items + len(sizes), dtype=np.int64)
    tables: list[np.ndarray] = [None] * (n_items + len(sizes))  # type: ignore[list-item]
    at = 0
    for t, size in enumerate(sizes):
        root = n_items + t
        parent[root] = -1
        tables[root] = rng.uniform(0.05, 0.95, size=1)
        for v in range(at, at + size):
            parent[v] = root
            tables[v] = rng.uniform(0.05, 0.95, size=2)
        at += size
    return TreeModel(parent=parent, tables=tables, n_obs=n_items)


def bernoulli_matrix(
    rng: np.random.Generator, n_users: int, n_items: int, p: float = 0.4
) -> BinaryMatrix:
    x = rng.random((n_users, n_items)) < p
    users, items = np.nonzero(x)
    return BinaryMatrix.from_pairs(n_users, n_items, users, items)


def sample_from_model(rng: np.random.Generator, model: TreeModel, n_users: int) -> np.ndarray:
    """Ancestral sampling of observed rows from a latent forest."""
    out = np.zeros((n_users, model.n_obs), dtype=np.uint8)
    states = np.zeros((n_users, model.n_vars), dtype=np.int64)
    for r in model.roots:
        stack = [r]
        while stack:
            v = stack.pop()
            t = model.tables[v]
            if model.parent[v] < 0:
                p1 = np.full(n_users, t[0])
            else:
                p1 = t[states[:, int(model.parent[v])]]
            states[:, v] = rng.random(n_users) < p1
            stack.extend(model.children(v))
    for v in range(model.n_obs):
        out[:, int(model.columns[v])] = states[:, v]
    return out


@pytest.fixture(scope="session")
def flat_corpus():
    matrix, labels = planted_flat(n_blocks=4, block_size=3, n_users=2000, seed=7)
    return matrix, labels


@pytest.fixture(scope="session")
def flat_model(flat_corpus):
    matrix, _ = flat_corpus
    return learn_hierarchy(matrix, LearnerConfig(seed=7), max_top=20)


@pytest.fixture(scope="session")
def deep_corpus():
    matrix, block_labels, super_labels = planted_hierarchy(
        n_super=2, blocks_per_super=2, block_size=3, n_users=2000, seed=3
    )
    return matrix, block_labels, super_labels


@pytest.fixture(scope="session")
def deep_model(deep_corpus):
    matrix, _, _ = deep_corpus
    return learn_hierarchy(matrix, LearnerConfig(seed=3), max_top=2)
