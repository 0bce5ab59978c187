"""Stacked category hierarchies over a consumption matrix.

Repeats flat-layer learning on user-specific hard assignments: each learned
layer's categories become the next layer's binary "items" (did this user's
row activate the category?), until few enough top categories remain. Top
categories are then linked into a tree by pairwise mutual information. No
global EM ever runs on the stacked model; layer parameters are copied
verbatim.
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .data import BinaryMatrix, Vocabulary
from .errors import ConfigError, DataError
from .forest import FlatForest, LearnerConfig, learn_flat_forest
from .similarity import cosine_item_pairs
from .trees import Category, model_mi_item_latent, mutual_information

_logger = logging.getLogger(__name__)

MODEL_MAGIC = "HLTF-MODEL1"

NodeRef = tuple[int, int]  # (level, category index)


def node_id(level: int, index: int) -> str:
    return f"z{level}.{index}"


_NODE_RE = re.compile(r"^z(\d+)\.(\d+)$")


def parse_node_id(text: str) -> NodeRef:
    m = _NODE_RE.match(text)
    if not m:
        raise DataError(f"malformed node id {text!r}")
    return int(m.group(1)), int(m.group(2))


@dataclass
class HierarchicalModel:
    """Layers of categories plus the training matrix they were learned from.

    ``assignments[l]`` is the hard-assignment matrix whose columns are the
    level-(l+1) categories; it is also the training input of layer l+2.
    The top tree (maximum-MI spanning tree over top categories) is kept for
    completeness but nothing downstream reads its tables.
    """

    layers: list[FlatForest]
    assignments: list[BinaryMatrix]
    data: BinaryMatrix
    top_root: int | None = None
    top_root_prior: float | None = None
    top_edges: list[tuple[int, int]] = field(default_factory=list)
    top_edge_tables: list[np.ndarray] = field(default_factory=list)
    timings: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    _composed: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def n_items(self) -> int:
        return self.data.n_items

    def layer(self, level: int) -> FlatForest:
        if not 1 <= level <= self.depth:
            raise DataError(f"level {level} outside 1..{self.depth}")
        return self.layers[level - 1]

    def composed_ownership(self, level: int) -> np.ndarray:
        """Item -> owning category index at the given level."""
        self.layer(level)
        if level not in self._composed:
            comp = self.layers[0].ownership
            for l in range(1, level):
                comp = self.layers[l].ownership[comp]
            self._composed[level] = comp
        return self._composed[level]


def hard_assignments(forest: FlatForest, matrix: BinaryMatrix) -> BinaryMatrix:
    """Per-user, per-category argmax-posterior bit matrix (ties go to 1).

    For a single-latent category the posterior log-odds are linear in the
    user's row, so the whole layer reduces to one sparse product against a
    per-category weight vector plus a constant — exact, and fast enough to
    re-run per layer.
    """
    n_cats = forest.n_categories
    n_users = matrix.n_users
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    R = matrix.csr().astype(np.float64)
    chunk = 512
    for start in range(0, n_cats, chunk):
        cats = forest.categories[start : start + chunk]
        w_rows, w_cols, w_vals = [], [], []
        consts = np.empty(len(cats))
        for local, cat in enumerate(cats):
            t = cat.child_tables()
            on = np.log(t[:, 1]) - np.log(t[:, 0])
            off = np.log(1.0 - t[:, 1]) - np.log(1.0 - t[:, 0])
            prior = cat.prior
            consts[local] = math.log(prior) - math.log(1.0 - prior) + off.sum()
            w_rows.append(cat.items)
            w_cols.append(np.full(cat.size, local))
            w_vals.append(on - off)
        W = sp.csc_matrix(
            (np.concatenate(w_vals), (np.concatenate(w_rows), np.concatenate(w_cols))),
            shape=(matrix.n_items, len(cats)),
        )
        scores = np.asarray((R @ W).todense()) + consts[None, :]
        u, c = np.nonzero(scores >= 0.0)
        rows.append(u)
        cols.append(c + start)
    users = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    cats_idx = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    return BinaryMatrix.from_pairs(n_users, n_cats, users, cats_idx)


def learn_hierarchy(
    matrix: BinaryMatrix,
    config: LearnerConfig | None = None,
    max_top: int = 20,
    max_layers: int = 32,
) -> HierarchicalModel:
    """Learn layers until at most ``max_top`` categories remain on top.

    Every layer must strictly shrink the category count; a layer that fails
    to contract is discarded and the loop stops with the model built so far
    (degenerate data therefore yields a one-layer model). The final top
    categories are linked into a maximum-MI tree.
    """
    if config is None:
        config = LearnerConfig()
    if max_top < 1:
        raise ConfigError("max_top must be at least 1")
    model = HierarchicalModel(layers=[], assignments=[], data=matrix)
    current = matrix
    level = 1
    while level <= max_layers:
        t0 = time.perf_counter()
        sim = cosine_item_pairs(current, allow_empty_columns=level > 1)
        t1 = time.perf_counter()
        forest = learn_flat_forest(current, config, sim, level)
        t2 = time.perf_counter()
        if model.layers and forest.n_categories >= model.layers[-1].n_categories:
            _logger.warning(
                "layer %d did not contract (%d -> %d categories); stopping",
                level,
                model.layers[-1].n_categories,
                forest.n_categories,
            )
            break
        assign = hard_assignments(forest, current)
        t3 = time.perf_counter()
        model.layers.append(forest)
        model.assignments.append(assign)
        model.timings.append(
            {
                "level": level,
                "similarity_s": t1 - t0,
                "flat_s": t2 - t1,
                "assign_s": t3 - t2,
                "categories": forest.n_categories,
            }
        )
        if forest.n_categories <= max_top:
            break
        current = assign
        level += 1
    link_top_level(model)
    return model


def link_top_level(model: HierarchicalModel) -> None:
    """Join top categories into a rooted maximum-MI spanning tree.

    Edge weights are empirical MI between hard-assignment columns; the root
    is the top node with the largest item descendancy (ties to the lowest
    index). Edge tables come from smoothed pairwise counts. With a single
    top node this is a no-op apart from its smoothed marginal.
    """
    if not model.layers:
        raise DataError("empty model")
    top_level = model.depth
    A = model.assignments[-1]
    n = model.layers[-1].n_categories
    N = A.n_users
    D = np.asarray(A.csr().todense()).astype(np.int64)
    col_sizes = D.sum(axis=0)

    desc_sizes = np.array([len(items_under(model, (top_level, i))) for i in range(n)])
    root = int(np.lexsort((np.arange(n), -desc_sizes))[0])
    model.top_root = root
    model.top_root_prior = (float(col_sizes[root]) + 1.0) / (N + 2.0)
    model.top_edges = []
    model.top_edge_tables = []
    if n == 1:
        return

    C = D.T @ D  # pairwise co-activation counts
    mi = np.zeros((n, n))
    for a in range(n):
        for b in range(a + 1, n):
            p11 = C[a, b] / N
            p10 = (col_sizes[a] - C[a, b]) / N
            p01 = (col_sizes[b] - C[a, b]) / N
            p00 = 1.0 - p11 - p10 - p01
            joint = np.array([[p00, p01], [p10, p11]])
            mi[a, b] = mi[b, a] = mutual_information(joint)

    in_tree = {root}
    while len(in_tree) < n:
        best: tuple[float, int, int] | None = None
        for v in range(n):
            if v in in_tree:
                continue
            for u in sorted(in_tree):
                w = mi[u, v]
                # maximize weight; break ties on lowest child then lowest parent
                key = (w, -v, -u)
                if best is None or key > (best[0], -best[1], -best[2]):
                    best = (w, v, u)
        assert best is not None
        _, v, u = best
        c11 = int(C[u, v])
        c1 = int(col_sizes[u])
        c01 = int(col_sizes[v]) - c11
        table = np.array(
            [
                (c01 + 1.0) / ((N - c1) + 2.0),  # P(child=1 | parent=0)
                (c11 + 1.0) / (c1 + 2.0),  # P(child=1 | parent=1)
            ]
        )
        model.top_edges.append((u, v))
        model.top_edge_tables.append(table)
        in_tree.add(v)


def items_under(model: HierarchicalModel, node: NodeRef) -> np.ndarray:
    """Sorted level-0 item ids in the node's descendancy."""
    level, idx = node
    comp = model.composed_ownership(level)
    if not 0 <= idx < model.layer(level).n_categories:
        raise DataError(f"no category {idx} at level {level}")
    return np.flatnonzero(comp == idx)


def children_of(model: HierarchicalModel, node: NodeRef) -> np.ndarray:
    """Category indices one level down (or item ids for a level-1 node)."""
    level, idx = node
    return np.flatnonzero(model.layer(level).ownership == idx)


def _level1_descendants(model: HierarchicalModel, node: NodeRef) -> list[int]:
    level, idx = node
    current = {idx}
    for l in range(level, 1, -1):
        owner = model.layer(l).ownership
        current = set(np.flatnonzero(np.isin(owner, sorted(current))).tolist())
    return sorted(current)


def representatives(
    model: HierarchicalModel, node: NodeRef, k: int = 5
) -> list[tuple[int, float]]:
    """Top item representatives of a node with their MI scores.

    Level-1 nodes rank their own children by model MI against the latent.
    Higher nodes pool their level-1 descendants' representatives and rank by
    empirical MI between the item's data column and the node's
    hard-assignment column. Ties break to the lowest item index.
    """
    if k < 1:
        raise ConfigError("k must be at least 1")
    level, idx = node
    cat = model.layer(level).categories[idx]
    if level == 1:
        scored = [(model_mi_item_latent(cat, int(it)), int(it)) for it in cat.items]
        scored.sort(key=lambda t: (-t[0], t[1]))
        return [(it, mi) for mi, it in scored[:k]]

    pool: set[int] = set()
    for c1 in _level1_descendants(model, node):
        pool.update(it for it, _ in representatives(model, (1, c1), k))
    a_users = set(model.assignments[level - 1].col_users(idx).tolist())
    N = model.data.n_users
    scored = []
    for it in sorted(pool):
        x_users = model.data.col_users(it)
        c11 = sum(1 for u in x_users.tolist() if u in a_users)
        p11 = c11 / N
        p10 = (len(x_users) - c11) / N
        p01 = (len(a_users) - c11) / N
        p00 = 1.0 - p11 - p10 - p01
        mi = mutual_information(np.array([[p00, p01], [p10, p11]]))
        scored.append((-mi, it))
    scored.sort()
    return [(it, -neg) for neg, it in scored[:k]]


def export_hierarchy(
    model: HierarchicalModel,
    vocab: Vocabulary | None = None,
    reps_per_node: int = 5,
    dataset: str | None = None,
    timestamps: tuple[float, float] | None = None,
) -> dict:
    """JSON-ready hierarchy export for browsing.

    Every latent node appears once with its level, parent, representative
    items (with MI scores), child node ids, and full item membership. Leaves
    (items) each occur in exactly one level-1 node's membership. Metadata
    stays data-derived so exports are byte-stable across reruns.
    """

    def token(item: int) -> str:
        return vocab.items[item] if vocab is not None else str(item)

    sizes = {
        (l, i): len(items_under(model, (l, i)))
        for l in range(1, model.depth + 1)
        for i in range(model.layer(l).n_categories)
    }
    nodes = []
    for level in range(model.depth, 0, -1):
        order = sorted(
            range(model.layer(level).n_categories), key=lambda i: (-sizes[(level, i)], i)
        )
        for idx in order:
            if level < model.depth:
                parent = node_id(level + 1, int(model.layer(level + 1).ownership[idx]))
            else:
                parent = None
            if level > 1:
                kids = children_of(model, (level, idx)).tolist()
                kids.sort(key=lambda c: (-sizes[(level - 1, c)], c))
                child_ids = [node_id(level - 1, c) for c in kids]
            else:
                child_ids = []
            reps = [
                {"item": token(it), "mi": float(mi)}
                for it, mi in representatives(model, (level, idx), reps_per_node)
            ]
            nodes.append(
                {
                    "id": node_id(level, idx),
                    "level": level,
                    "parent": parent,
                    "reps": reps,
                    "children": child_ids,
                    "items": [token(it) for it in items_under(model, (level, idx)).tolist()],
                }
            )
    meta: dict = {
        "levels": model.depth,
        "users": model.data.n_users,
        "items": model.n_items,
        "categories_per_level": [f.n_categories for f in model.layers],
        "top_root": node_id(model.depth, model.top_root) if model.top_root is not None else None,
        "top_edges": [
            [node_id(model.depth, u), node_id(model.depth, v)] for u, v in model.top_edges
        ],
    }
    if dataset is not None:
        meta["dataset"] = dataset
    if timestamps is not None:
        meta["timestamps"] = {"events_min": timestamps[0], "events_max": timestamps[1]}
    if model.meta:
        meta["config"] = model.meta
    return {"meta": meta, "nodes": nodes}


# -- persistence ---------------------------------------------------------------


def _format_value(x: float) -> str:
    return f"{x:.17g}"


def save_model(model: HierarchicalModel, directory: str | os.PathLike) -> None:
    """Write one HLTF-MODEL1 file plus manifest per layer, and the top tree."""
    os.makedirs(directory, exist_ok=True)
    for forest in model.layers:
        level = forest.level
        path = os.path.join(directory, f"layer-{level:02d}.model")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{MODEL_MAGIC}\n")
            fh.write(f"vars {forest.n_items + forest.n_categories} obs {forest.n_items} level {level}\n")
            for col in range(forest.n_items):
                ci = int(forest.ownership[col])
                cat = forest.categories[ci]
                pos = int(np.flatnonzero(cat.items == col)[0])
                t = cat.tables[pos]
                fh.write(
                    f"{col} observed {level - 1} {forest.n_items + ci} "
                    f"{_format_value(t[0])} {_format_value(t[1])}\n"
                )
            for ci, cat in enumerate(forest.categories):
                fh.write(
                    f"{forest.n_items + ci} latent {level} -1 {_format_value(cat.prior)}\n"
                )
        mpath = os.path.join(directory, f"layer-{level:02d}.manifest.tsv")
        with open(mpath, "w", encoding="utf-8") as fh:
            fh.write("category\tsize\tcolumns\n")
            for ci, cat in enumerate(forest.categories):
                cols = " ".join(str(int(c)) for c in sorted(cat.items.tolist()))
                fh.write(f"{node_id(level, ci)}\t{cat.size}\t{cols}\n")
    top = {
        "root": model.top_root,
        "root_prior": model.top_root_prior,
        "edges": [
            {"parent": u, "child": v, "table": [float(t[0]), float(t[1])]}
            for (u, v), t in zip(model.top_edges, model.top_edge_tables)
        ],
    }
    with open(os.path.join(directory, "top_tree.json"), "w", encoding="utf-8") as fh:
        json.dump(top, fh, indent=2)
        fh.write("\n")
    manifest = {
        "levels": model.depth,
        "categories_per_level": [f.n_categories for f in model.layers],
        "n_items": model.n_items,
        "config": model.meta,
    }
    with open(os.path.join(directory, "model.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _load_layer(path: str, expected_level: int) -> FlatForest:
    with open(path, "r", encoding="utf-8") as fh:
        magic = fh.readline().strip()
        if magic != MODEL_MAGIC:
            raise DataError(f"{path}: bad model magic {magic!r}")
        header = fh.readline().split()
        if len(header) != 6 or header[0] != "vars" or header[2] != "obs":
            raise DataError(f"{path}: malformed header")
        n_vars, n_obs = int(header[1]), int(header[3])
        parents = np.full(n_vars, -1, dtype=np.int64)
        tables: list[np.ndarray | None] = [None] * n_vars
        kinds: list[str] = [""] * n_vars
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            vid = int(parts[0])
            kinds[vid] = parts[1]
            parents[vid] = int(parts[3])
            tables[vid] = np.array([float(x) for x in parts[4:]])
    categories: list[Category] = []
    for latent in range(n_obs, n_vars):
        children = np.flatnonzero(parents == latent)
        prior_table = tables[latent]
        if prior_table is None or len(prior_table) != 1:
            raise DataError(f"{path}: latent {latent} lacks a marginal")
        child_tables = np.stack([tables[int(c)] for c in children])
        categories.append(
            Category(children, float(prior_table[0]), child_tables, expected_level)
        )
    return FlatForest(categories=categories, level=expected_level, n_items=n_obs)


def load_model(directory: str | os.PathLike, data: BinaryMatrix) -> HierarchicalModel:
    """Rebuild a model from a checkpoint directory plus its training matrix.

    Hard assignments are recomputed (they are a pure function of layers and
    data, and recomputation keeps checkpoints small and honest).
    """
    files = sorted(
        f for f in os.listdir(directory) if f.startswith("layer-") and f.endswith(".model")
    )
    if not files:
        raise DataError(f"{directory}: no layer files")
    model = HierarchicalModel(layers=[], assignments=[], data=data)
    current: BinaryMatrix = data
    for level, fname in enumerate(files, start=1):
        forest = _load_layer(os.path.join(directory, fname), level)
        if forest.n_items != current.n_items:
            raise DataError(
                f"{fname}: expects {forest.n_items} columns, previous layer has {current.n_items}"
            )
        assign = hard_assignments(forest, current)
        model.layers.append(forest)
        model.assignments.append(assign)
        current = assign
    top_path = os.path.join(directory, "top_tree.json")
    if os.path.exists(top_path):
        with open(top_path, "r", encoding="utf-8") as fh:
            top = json.load(fh)
        model.top_root = top.get("root")
        model.top_root_prior = top.get("root_prior")
        model.top_edges = [(e["parent"], e["child"]) for e in top.get("edges", [])]
        model.top_edge_tables = [np.array(e["table"]) for e in top.get("edges", [])]
    else:
        link_top_level(model)
    meta_path = os.path.join(directory, "model.json")
    if os.path.exists(meta_path):
        with open(meta_path, "r", encoding="utf-8") as fh:
            model.meta = json.load(fh).get("config", {})
    return model


def write_timing_log(
    target: str | os.PathLike, model: HierarchicalModel, total_seconds: float
) -> None:
    """Per-phase wall-time breakdown: similarity, then flat/assignment per layer."""
    with open(target, "w", encoding="utf-8") as fh:
        fh.write("phase\tseconds\n")
        sim_total = sum(t["similarity_s"] for t in model.timings)
        fh.write(f"Cosine/MI\t{sim_total:.6f}\n")
        for t in model.timings:
            fh.write(f"Flat Layer-{t['level']}\t{t['flat_s']:.6f}\n")
            fh.write(f"H.A. Layer-{t['level']}\t{t['assign_s']:.6f}\n")
        fh.write(f"Total Model\t{total_seconds:.6f}\n")


def read_timing_log(path: str | os.PathLike) -> dict[str, float]:
    """Phase name -> seconds from a timing log written by write_timing_log."""
    out: dict[str, float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != "phase\tseconds":
            raise DataError(f"{path}: unexpected timing log header {header!r}")
        for line in fh:
            phase, _, value = line.rstrip("\n").partition("\t")
            if not value:
                raise DataError(f"{path}: malformed timing row {line!r}")
            out[phase] = float(value)
    return out
