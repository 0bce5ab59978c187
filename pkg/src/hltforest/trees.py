"""Forest-structured latent tree models over binary variables.

A :class:`TreeModel` is a forest of rooted trees whose nodes are binary
variables: observed variables sit at data columns, latent variables above
them. Each root carries a marginal table, every other variable a conditional
table given its parent. Exact inference runs sum-product per tree,
vectorized over users; EM re-estimates tables from expected counts with a
Laplace pseudo-count of 1.0 per cell so probabilities stay strictly inside
(0, 1) on sparse data, accepting each table's update only when it keeps the
expected complete-data objective from falling (so the data log-likelihood
never decreases across steps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._rng import as_generator
from .data import BinaryMatrix
from .errors import DataError

__all__ = [
    "TreeModel",
    "Category",
    "PosteriorRow",
    "learn_lcm",
    "log_likelihood",
    "bic",
    "posterior_row",
    "latent_posteriors",
    "run_em",
    "mutual_information",
    "model_mi_item_latent",
    "canonical_orientation",
]


class TreeModel:
    """Forest of rooted trees over binary variables.

    Variables are ids ``0..n_vars-1``; the first ``n_obs`` are observed and
    read data column ``columns[v]``, the rest are latent. ``parent[v]`` is -1
    for roots. ``tables[v]`` holds ``[P(v=1)]`` for roots and
    ``[P(v=1|parent=0), P(v=1|parent=1)]`` otherwise, all strictly inside
    (0, 1).
    """

    def __init__(
        self,
        parent: Sequence[int],
        tables: Sequence[np.ndarray],
        n_obs: int,
        columns: Sequence[int] | None = None,
        levels: Sequence[int] | None = None,
    ):
        self.parent = np.asarray(parent, dtype=np.int32)
        self.tables = [np.asarray(t, dtype=np.float64).copy() for t in tables]
        self.n_obs = int(n_obs)
        n_vars = len(self.parent)
        if len(self.tables) != n_vars:
            raise ValueError("one table per variable required")
        if columns is None:
            columns = np.arange(self.n_obs, dtype=np.int64)
        self.columns = np.asarray(columns, dtype=np.int64)
        if len(self.columns) != self.n_obs:
            raise ValueError("one data column per observed variable required")
        if levels is None:
            levels = np.where(np.arange(n_vars) < self.n_obs, 0, 1)
        self.levels = np.asarray(levels, dtype=np.int32)

        for v in range(n_vars):
            want = 1 if self.parent[v] < 0 else 2
            if self.tables[v].shape != (want,):
                raise ValueError(
                    f"variable {v}: table shape {self.tables[v].shape}, want ({want},)"
                )
            if np.any(self.tables[v] <= 0.0) or np.any(self.tables[v] >= 1.0):
                raise ValueError(f"variable {v}: probabilities must be strictly inside (0,1)")

        self._children: list[list[int]] = [[] for _ in range(n_vars)]
        for v in range(n_vars):
            p = int(self.parent[v])
            if p >= 0:
                if p == v:
                    raise ValueError("self-parenting variable")
                self._children[p].append(v)
        self.roots = [v for v in range(n_vars) if self.parent[v] < 0]
        # per-tree traversal orders (parents before children); validates acyclicity
        self._trees: list[list[int]] = []
        seen = 0
        for r in self.roots:
            order: list[int] = []
            stack = [r]
            while stack:
                v = stack.pop()
                order.append(v)
                stack.extend(self._children[v])
            self._trees.append(order)
            seen += len(order)
        if seen != n_vars:
            raise ValueError("parent links contain a cycle")

    # -- shape ---------------------------------------------------------------

    @property
    def n_vars(self) -> int:
        return len(self.parent)

    @property
    def n_latent(self) -> int:
        return self.n_vars - self.n_obs

    @property
    def latent_ids(self) -> list[int]:
        return list(range(self.n_obs, self.n_vars))

    def children(self, v: int) -> list[int]:
        return self._children[v]

    def param_count(self) -> int:
        """Free parameters: one per root marginal, two per child table."""
        return sum(len(t) for t in self.tables)

    def copy(self) -> "TreeModel":
        return TreeModel(
            self.parent.copy(),
            [t.copy() for t in self.tables],
            self.n_obs,
            self.columns.copy(),
            self.levels.copy(),
        )


class Category(TreeModel):
    """One latent root over a set of observed item children.

    ``items`` aliases ``columns``: the (layer-local) column ids this category
    claims. The latent variable has id ``n_obs``.
    """

    def __init__(
        self, items: Sequence[int], prior: float, child_tables: np.ndarray, level: int = 1
    ):
        items = np.asarray(items, dtype=np.int64)
        k = len(items)
        child_tables = np.asarray(child_tables, dtype=np.float64).reshape(k, 2)
        parent = [k] * k + [-1]
        tables = [child_tables[j].copy() for j in range(k)] + [np.array([prior])]
        levels = [0] * k + [level]
        super().__init__(parent, tables, n_obs=k, columns=items, levels=levels)

    @property
    def items(self) -> np.ndarray:
        return self.columns

    @property
    def latent(self) -> int:
        return self.n_obs

    @property
    def prior(self) -> float:
        return float(self.tables[self.latent][0])

    def child_tables(self) -> np.ndarray:
        return np.stack([self.tables[j] for j in range(self.n_obs)])

    @property
    def size(self) -> int:
        return self.n_obs

    def copy(self) -> "Category":
        return Category(
            self.items.copy(), self.prior, self.child_tables(), int(self.levels[self.latent])
        )


@dataclass
class PosteriorRow:
    """Per-latent posterior for a single user row: rows of (P=0, P=1)."""

    latent_ids: list[int]
    probs: np.ndarray  # (n_latent, 2), rows sum to 1

    def p1(self, latent_id: int) -> float:
        return float(self.probs[self.latent_ids.index(latent_id), 1])


# -- inference ---------------------------------------------------------------


def _gather(model: TreeModel, data: BinaryMatrix | np.ndarray) -> np.ndarray:
    """Dense (n_rows, n_obs) block of the model's observed columns.

    Array data is indexed by ``model.columns`` (so with identity columns an
    already-aligned block passes through unchanged).
    """
    if isinstance(data, BinaryMatrix):
        return data.dense_columns(model.columns)
    X = np.asarray(data)
    if X.ndim != 2:
        raise ValueError("data array must be 2-d")
    return X[:, model.columns]


def _upward(model: TreeModel, tree: list[int], Xm: np.ndarray):
    """Sum-product upward pass for one tree.

    Returns (beta, msg): beta[v] is the (n,2) product of evidence and child
    messages at v; msg[v] the (n,2) message v sends its parent, indexed by
    parent state.
    """
    n = Xm.shape[0]
    beta: dict[int, np.ndarray] = {}
    msg: dict[int, np.ndarray] = {}
    for v in reversed(tree):  # children before parents
        if v < model.n_obs:
            x = Xm[:, v].astype(np.float64)
            b = np.empty((n, 2))
            b[:, 0] = 1.0 - x
            b[:, 1] = x
        else:
            b = np.ones((n, 2))
        for c in model.children(v):
            b = b * msg[c]
        beta[v] = b
        p = int(model.parent[v])
        if p >= 0:
            t = model.tables[v]
            m = np.empty((n, 2))
            m[:, 0] = b[:, 0] * (1.0 - t[0]) + b[:, 1] * t[0]
            m[:, 1] = b[:, 0] * (1.0 - t[1]) + b[:, 1] * t[1]
            msg[v] = m
    return beta, msg


def _downward(model: TreeModel, tree: list[int], beta, msg, n: int):
    """Posterior marginals and (parent, child) pairwise posteriors for one tree."""
    post: dict[int, np.ndarray] = {}
    pair: dict[int, np.ndarray] = {}  # child id -> (n, 2, 2): [.., parent_state, child_state]
    gamma: dict[int, np.ndarray] = {}  # everything outside v's subtree, unnormalized
    root = tree[0]
    p1 = model.tables[root][0]
    gamma[root] = np.tile(np.array([1.0 - p1, p1]), (n, 1))
    for v in tree:  # parents before children
        joint_v = gamma[v] * beta[v]
        post[v] = joint_v / joint_v.sum(axis=1, keepdims=True)
        for c in model.children(v):
            t = model.tables[c]
            T = np.array([[1.0 - t[0], t[0]], [1.0 - t[1], t[1]]])  # [v_state, c_state]
            g_c = gamma[v] * beta[v] / msg[c]  # messages are strictly positive
            pr = g_c[:, :, None] * T[None, :, :] * beta[c][:, None, :]
            pair[c] = pr / pr.sum(axis=(1, 2), keepdims=True)
            gamma[c] = g_c @ T
    return post, pair


def _loglik_rows(model: TreeModel, Xm: np.ndarray) -> np.ndarray:
    total = np.zeros(Xm.shape[0])
    for root, tree in zip(model.roots, model._trees):
        beta, _ = _upward(model, tree, Xm)
        p1 = model.tables[root][0]
        z = beta[root][:, 0] * (1.0 - p1) + beta[root][:, 1] * p1
        total += np.log(z)
    return total


def log_likelihood(model: TreeModel, data: BinaryMatrix | np.ndarray) -> float:
    """Total log-likelihood of the rows under the model (natural log)."""
    return float(_loglik_rows(model, _gather(model, data)).sum())


def bic(model: TreeModel, data: BinaryMatrix | np.ndarray) -> float:
    """BIC score: loglik - (d/2)·ln N over the given rows."""
    Xm = _gather(model, data)
    n = Xm.shape[0]
    if n == 0:
        raise DataError("BIC undefined on empty data")
    return float(_loglik_rows(model, Xm).sum()) - (model.param_count() / 2.0) * math.log(n)


def _posteriors_aligned(model: TreeModel, Xm: np.ndarray) -> np.ndarray:
    n = Xm.shape[0]
    out = np.empty((n, model.n_latent))
    for root, tree in zip(model.roots, model._trees):
        beta, msg = _upward(model, tree, Xm)
        post, _ = _downward(model, tree, beta, msg, n)
        for v in tree:
            if v >= model.n_obs:
                out[:, v - model.n_obs] = post[v][:, 1]
    return out


def latent_posteriors(model: TreeModel, data: BinaryMatrix | np.ndarray) -> np.ndarray:
    """P(latent=1 | its tree's observed row), shape (n_rows, n_latent).

    Columns follow latent id order. Each latent conditions only on its own
    tree's observed children; trees are mutually independent.
    """
    return _posteriors_aligned(model, _gather(model, data))


def posterior_row(model: TreeModel, row: Iterable[int]) -> PosteriorRow:
    """Per-latent posterior for one user row given as a set of active columns."""
    active = set(int(c) for c in row)
    x = np.array([[1 if int(c) in active else 0 for c in model.columns]], dtype=np.uint8)
    p = _posteriors_aligned(model, x)[0]
    return PosteriorRow(latent_ids=model.latent_ids, probs=np.stack([1.0 - p, p], axis=1))


def run_em(
    model: TreeModel,
    data: BinaryMatrix | np.ndarray,
    steps: int,
    update: Iterable[int] | None = None,
) -> TreeModel:
    """EM over the model's own variables; returns a new model.

    Each M-step re-estimates tables from expected counts with a Laplace
    pseudo-count of 1.0 per cell. A smoothed update is kept only when it
    does not lower that table's expected complete-data log-likelihood;
    otherwise the table stays put. Near the smoothed fixed point the
    pseudo-counts would otherwise drag parameters toward 1/2 and the data
    log-likelihood slightly down — the guard makes every step non-decreasing
    in log-likelihood while keeping probabilities strictly interior.
    ``update`` restricts which variables' tables move (local EM); every
    other table stays bit-identical.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    return _run_em_aligned(model, _gather(model, data), steps, update)


def _run_em_aligned(
    model: TreeModel, Xm: np.ndarray, steps: int, update: Iterable[int] | None = None
) -> TreeModel:
    n = Xm.shape[0]
    if n == 0:
        raise DataError("cannot run EM on empty data")
    upd = set(range(model.n_vars)) if update is None else set(int(v) for v in update)
    cur = model
    for _ in range(steps):
        new_tables = [t.copy() for t in cur.tables]
        for root, tree in zip(cur.roots, cur._trees):
            beta, msg = _upward(cur, tree, Xm)
            post, pair = _downward(cur, tree, beta, msg, n)
            if root in upd:
                s1 = post[root][:, 1].sum()
                cand = np.array([(s1 + 1.0) / (n + 2.0)])
                if _q_binomial(cand[0], s1, n - s1) >= _q_binomial(
                    float(cur.tables[root][0]), s1, n - s1
                ):
                    new_tables[root] = cand
            for v in tree:
                if v == root or v not in upd:
                    continue
                cnt = pair[v].sum(axis=0)  # (parent_state, child_state)
                cand = np.array(
                    [
                        (cnt[0, 1] + 1.0) / (cnt[0, 0] + cnt[0, 1] + 2.0),
                        (cnt[1, 1] + 1.0) / (cnt[1, 0] + cnt[1, 1] + 2.0),
                    ]
                )
                q_cand = _q_binomial(cand[0], cnt[0, 1], cnt[0, 0]) + _q_binomial(
                    cand[1], cnt[1, 1], cnt[1, 0]
                )
                q_old = _q_binomial(
                    float(cur.tables[v][0]), cnt[0, 1], cnt[0, 0]
                ) + _q_binomial(float(cur.tables[v][1]), cnt[1, 1], cnt[1, 0])
                if q_cand >= q_old:
                    new_tables[v] = cand
        cur = TreeModel(cur.parent, new_tables, cur.n_obs, cur.columns, cur.levels)
    return cur


def _q_binomial(p: float, on: float, off: float) -> float:
    """Expected complete-data log-likelihood share of one table entry."""
    return on * math.log(p) + off * math.log(1.0 - p)


# -- scores ------------------------------------------------------------------


def mutual_information(joint: np.ndarray) -> float:
    """Mutual information (nats) of a 2x2 joint distribution.

    Zero cells contribute zero. The joint must be non-negative and sum to 1
    within 1e-9.
    """
    j = np.asarray(joint, dtype=np.float64)
    if j.shape != (2, 2):
        raise ValueError("joint must be 2x2")
    if np.any(j < -1e-12):
        raise ValueError("joint has negative mass")
    j = np.clip(j, 0.0, None)
    if abs(j.sum() - 1.0) > 1e-9:
        raise ValueError(f"joint must sum to 1, got {j.sum()!r}")
    px = j.sum(axis=1)
    py = j.sum(axis=0)
    mi = 0.0
    for a in range(2):
        for b in range(2):
            if j[a, b] > 0.0:
                mi += j[a, b] * math.log(j[a, b] / (px[a] * py[b]))
    return max(mi, 0.0)


def model_mi_item_latent(category: Category, item: int) -> float:
    """Model-implied MI between an item child and the category's latent."""
    hits = np.flatnonzero(category.columns == int(item))
    if len(hits) == 0:
        raise ValueError(f"item {item} is not a child of this category")
    t = category.tables[int(hits[0])]
    p1 = category.prior
    joint = np.array(
        [
            [(1.0 - p1) * (1.0 - t[0]), (1.0 - p1) * t[0]],
            [p1 * (1.0 - t[1]), p1 * t[1]],
        ]
    )
    return mutual_information(joint)


# -- learning ----------------------------------------------------------------


def canonical_orientation(category: Category) -> Category:
    """Relabel latent states so state 1 has the higher mean child activity."""
    ct = category.child_tables()
    if ct[:, 1].mean() < ct[:, 0].mean():
        return Category(
            category.items,
            1.0 - category.prior,
            ct[:, ::-1],
            int(category.levels[category.latent]),
        )
    return category


def learn_lcm(
    data: BinaryMatrix | np.ndarray,
    items: Sequence[int],
    em_steps: int = 10,
    seed: int | np.random.Generator = 0,
    level: int = 1,
) -> Category:
    """Fit a single-latent category over the given columns.

    Child tables start uniform in [0.2, 0.8] from the seeded stream; the
    root marginal starts at the smoothed fraction of rows with any child
    active. After ``em_steps`` EM iterations the state orientation is
    normalized (state 1 = consuming).
    """
    rng = as_generator(seed)
    items = np.asarray(sorted(int(i) for i in items), dtype=np.int64)
    if len(items) == 0:
        raise DataError("a category needs at least one item")
    init = rng.uniform(0.2, 0.8, size=(len(items), 2))
    probe = Category(items, 0.5, init, level)
    Xm = _gather(probe, data)
    n = Xm.shape[0]
    if n == 0:
        raise DataError("cannot learn a category from zero rows")
    any_active = int((Xm.sum(axis=1) > 0).sum())
    prior = (any_active + 1.0) / (n + 2.0)
    cat = Category(items, prior, init, level)
    fitted = _run_em_aligned(cat, Xm, em_steps)
    cat = Category(
        items,
        float(fitted.tables[cat.latent][0]),
        np.stack([fitted.tables[j] for j in range(len(items))]),
        level,
    )
    return canonical_orientation(cat)
