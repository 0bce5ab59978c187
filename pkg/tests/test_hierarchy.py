"""Stacked hierarchy learning, navigation, export, and persistence."""

from __future__ import annotations

import json

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from conftest import bernoulli_matrix
from oracles import enum_posterior, mi_from_joint

from hltforest import (
    BinaryMatrix,
    Category,
    ConfigError,
    DataError,
    FlatForest,
    LearnerConfig,
    children_of,
    export_hierarchy,
    hard_assignments,
    items_under,
    learn_hierarchy,
    link_top_level,
    load_model,
    model_mi_item_latent,
    node_id,
    parse_node_id,
    read_timing_log,
    representatives,
    save_model,
    write_timing_log,
)
from hltforest.data import Vocabulary


def two_category_forest() -> FlatForest:
    """Hand-built layer: items {0,1} and {2,3,4} under two latents."""
    a = Category(
        items=np.array([0, 1]),
        prior=0.6,
        child_tables=np.array([[0.1, 0.8], [0.2, 0.7]]),
    )
    b = Category(
        items=np.array([2, 3, 4]),
        prior=0.3,
        child_tables=np.array([[0.05, 0.9], [0.3, 0.6], [0.25, 0.85]]),
    )
    return FlatForest(categories=[a, b], level=1, n_items=5)


# -- node ids -------------------------------------------------------------


def test_node_id_round_trip():
    assert node_id(2, 7) == "z2.7"
    assert parse_node_id("z2.7") == (2, 7)
    assert parse_node_id(node_id(13, 0)) == (13, 0)


@pytest.mark.parametrize("bad", ["", "z2", "2.7", "z2.7.1", "zx.1", "z-1.2", "Z2.7"])
def test_parse_node_id_rejects_malformed(bad):
    with pytest.raises(DataError):
        parse_node_id(bad)


# -- hard assignments ------------------------------------------------------


def test_hard_assignments_match_enumerated_posteriors():
    # Assignment bit must equal [P(latent=1 | row) >= 1/2] for every user and
    # category, with the posterior computed by brute-force enumeration.
    forest = two_category_forest()
    rng = np.random.default_rng(11)
    matrix = bernoulli_matrix(rng, 40, 5)
    assign = hard_assignments(forest, matrix)
    dense = matrix.dense_columns(np.arange(5))
    got = assign.dense_columns(np.arange(forest.n_categories))
    for ci, cat in enumerate(forest.categories):
        post = enum_posterior(cat, dense[:, cat.items])
        np.testing.assert_array_equal(got[:, ci], (post >= 0.5).astype(np.uint8))


def test_hard_assignment_tie_goes_to_one():
    # prior 1/2 and a child table with symmetric on/off rates makes the
    # posterior exactly 1/2 for every row; the convention is to assign 1.
    cat = Category(
        items=np.array([0]), prior=0.5, child_tables=np.array([[0.3, 0.7]])
    )
    forest = FlatForest(categories=[cat], level=1, n_items=1)
    matrix = BinaryMatrix.from_pairs(2, 1, np.array([0]), np.array([0]))
    assign = hard_assignments(forest, matrix)
    post = enum_posterior(cat, np.array([[1], [0]]))
    assert post[0] == pytest.approx(0.7)  # row with the item: clear 1
    assert post[1] == pytest.approx(0.3)  # row without: clear 0
    got = assign.dense_columns(np.array([0]))[:, 0]
    np.testing.assert_array_equal(got, [1, 0])

    tied = Category(
        items=np.array([0]), prior=0.5, child_tables=np.array([[0.5, 0.5]])
    )
    forest = FlatForest(categories=[tied], level=1, n_items=1)
    assign = hard_assignments(forest, matrix)
    np.testing.assert_array_equal(assign.dense_columns(np.array([0]))[:, 0], [1, 1])


def test_hard_assignments_shape_and_determinism():
    forest = two_category_forest()
    rng = np.random.default_rng(5)
    matrix = bernoulli_matrix(rng, 25, 5)
    a = hard_assignments(forest, matrix)
    b = hard_assignments(forest, matrix)
    assert a.n_users == 25 and a.n_items == 2
    assert a == b


# -- learn_hierarchy -------------------------------------------------------


def test_learn_hierarchy_contracts_strictly(deep_model):
    sizes = [layer.n_categories for layer in deep_model.layers]
    assert all(a > b for a, b in zip(sizes, sizes[1:]))
    assert sizes[-1] <= 2


def test_learn_hierarchy_levels_and_timings(deep_model):
    assert [layer.level for layer in deep_model.layers] == list(
        range(1, deep_model.depth + 1)
    )
    assert len(deep_model.timings) == deep_model.depth
    for level, row in enumerate(deep_model.timings, start=1):
        assert row["level"] == level
        assert row["categories"] == deep_model.layers[level - 1].n_categories
        for key in ("similarity_s", "flat_s", "assign_s"):
            assert row[key] >= 0.0


def test_learn_hierarchy_assignment_chain(deep_model):
    # assignments[l] columns are layer-(l+1) categories, users carried through
    for level, assign in enumerate(deep_model.assignments, start=1):
        assert assign.n_users == deep_model.data.n_users
        assert assign.n_items == deep_model.layers[level - 1].n_categories


def test_learn_hierarchy_recovers_planted_levels(deep_corpus, deep_model):
    _, block_labels, super_labels = deep_corpus
    assert adjusted_rand_score(block_labels, deep_model.composed_ownership(1)) == 1.0
    top = deep_model.composed_ownership(deep_model.depth)
    assert adjusted_rand_score(super_labels, top) == 1.0


def test_learn_hierarchy_degenerate_data_single_layer():
    # independent noise: layer 1 learns whatever it learns, layer 2 cannot
    # contract it further, so the loop must stop rather than stack junk
    rng = np.random.default_rng(0)
    matrix = bernoulli_matrix(rng, 120, 4, p=0.5)
    model = learn_hierarchy(matrix, LearnerConfig(seed=0), max_top=1)
    assert model.depth >= 1
    sizes = [layer.n_categories for layer in model.layers]
    assert all(a > b for a, b in zip(sizes, sizes[1:]))


def test_learn_hierarchy_max_top_validation(tiny_matrix):
    with pytest.raises(ConfigError):
        learn_hierarchy(tiny_matrix, max_top=0)


def test_composed_ownership_composes(deep_model):
    comp1 = deep_model.composed_ownership(1)
    np.testing.assert_array_equal(comp1, deep_model.layers[0].ownership)
    if deep_model.depth >= 2:
        comp2 = deep_model.composed_ownership(2)
        np.testing.assert_array_equal(
            comp2, deep_model.layers[1].ownership[comp1]
        )
    with pytest.raises(DataError):
        deep_model.composed_ownership(deep_model.depth + 1)


# -- navigation ------------------------------------------------------------


def test_items_under_partitions_each_level(deep_model):
    for level in range(1, deep_model.depth + 1):
        seen: list[int] = []
        for idx in range(deep_model.layer(level).n_categories):
            seen.extend(items_under(deep_model, (level, idx)).tolist())
        assert sorted(seen) == list(range(deep_model.n_items))


def test_items_under_matches_children_closure(deep_model):
    assert deep_model.depth >= 2
    for idx in range(deep_model.layer(2).n_categories):
        kids = children_of(deep_model, (2, idx))
        via_kids = np.concatenate(
            [items_under(deep_model, (1, int(c))) for c in kids]
        )
        np.testing.assert_array_equal(
            np.sort(via_kids), items_under(deep_model, (2, idx))
        )


def test_children_of_level1_are_items(deep_model):
    for idx in range(deep_model.layer(1).n_categories):
        np.testing.assert_array_equal(
            children_of(deep_model, (1, idx)),
            np.sort(deep_model.layer(1).categories[idx].items),
        )


def test_items_under_bad_node(deep_model):
    with pytest.raises(DataError):
        items_under(deep_model, (1, deep_model.layer(1).n_categories))
    with pytest.raises(DataError):
        items_under(deep_model, (0, 0))


# -- representatives -------------------------------------------------------


def test_representatives_level1_brute_force(deep_model):
    # level-1 ranking must equal a literal sort by model MI, ties to the
    # lowest item id
    for idx in range(deep_model.layer(1).n_categories):
        cat = deep_model.layer(1).categories[idx]
        want = sorted(
            ((model_mi_item_latent(cat, int(it)), int(it)) for it in cat.items),
            key=lambda t: (-t[0], t[1]),
        )
        got = representatives(deep_model, (1, idx), k=len(cat.items))
        assert [it for it, _ in got] == [it for _, it in want]
        for (_, mi_got), (mi_want, _) in zip(got, want):
            assert mi_got == pytest.approx(mi_want, abs=1e-12)


def test_representatives_scores_descend(deep_model):
    for level in range(1, deep_model.depth + 1):
        for idx in range(deep_model.layer(level).n_categories):
            reps = representatives(deep_model, (level, idx), k=4)
            scores = [mi for _, mi in reps]
            assert scores == sorted(scores, reverse=True)
            members = set(items_under(deep_model, (level, idx)).tolist())
            assert all(it in members for it, _ in reps)


def test_representatives_upper_level_empirical_mi(deep_model):
    # recompute the empirical item-vs-assignment MI by hand for one node
    level = deep_model.depth
    idx = 0
    reps = representatives(deep_model, (level, idx), k=3)
    a_col = np.zeros(deep_model.data.n_users, dtype=np.int64)
    a_col[deep_model.assignments[level - 1].col_users(idx)] = 1
    n = deep_model.data.n_users
    for it, mi in reps:
        x_col = np.zeros(n, dtype=np.int64)
        x_col[deep_model.data.col_users(it)] = 1
        joint = np.array(
            [
                [np.mean((x_col == 0) & (a_col == 0)), np.mean((x_col == 0) & (a_col == 1))],
                [np.mean((x_col == 1) & (a_col == 0)), np.mean((x_col == 1) & (a_col == 1))],
            ]
        )
        assert mi == pytest.approx(mi_from_joint(joint), abs=1e-12)


def test_representatives_k_clamps_and_validates(deep_model):
    big = representatives(deep_model, (1, 0), k=10_000)
    assert len(big) == deep_model.layer(1).categories[0].size
    assert len(representatives(deep_model, (1, 0), k=1)) == 1
    with pytest.raises(ConfigError):
        representatives(deep_model, (1, 0), k=0)


# -- top-level tree --------------------------------------------------------


def test_top_tree_spans_top_layer(deep_model):
    n_top = deep_model.layers[-1].n_categories
    assert deep_model.top_root is not None
    assert len(deep_model.top_edges) == n_top - 1
    reached = {deep_model.top_root}
    for u, v in deep_model.top_edges:
        assert u in reached  # parents appear before their children
        reached.add(v)
    assert reached == set(range(n_top))
    for table in deep_model.top_edge_tables:
        assert table.shape == (2,)
        assert np.all((table > 0.0) & (table < 1.0))


def test_top_root_is_largest_descendancy(deep_model):
    level = deep_model.depth
    sizes = [
        len(items_under(deep_model, (level, i)))
        for i in range(deep_model.layer(level).n_categories)
    ]
    best = max(range(len(sizes)), key=lambda i: (sizes[i], -i))
    assert deep_model.top_root == best


def test_top_tree_tables_match_smoothed_counts(deep_model):
    # Edge tables are add-one smoothed conditional rates of the child column
    # given the parent column of the top hard-assignment matrix.
    A = deep_model.assignments[-1]
    N = A.n_users
    dense = A.dense_columns(np.arange(A.n_items)).astype(np.int64)
    for (u, v), table in zip(deep_model.top_edges, deep_model.top_edge_tables):
        pu, cv = dense[:, u], dense[:, v]
        c11 = int(np.sum((pu == 1) & (cv == 1)))
        c1 = int(pu.sum())
        c01 = int(cv.sum()) - c11
        assert table[1] == pytest.approx((c11 + 1.0) / (c1 + 2.0), abs=1e-12)
        assert table[0] == pytest.approx((c01 + 1.0) / ((N - c1) + 2.0), abs=1e-12)
    root_count = int(dense[:, deep_model.top_root].sum())
    assert deep_model.top_root_prior == pytest.approx(
        (root_count + 1.0) / (N + 2.0), abs=1e-12
    )


def test_link_top_level_single_top(flat_corpus):
    matrix, _ = flat_corpus
    model = learn_hierarchy(matrix, LearnerConfig(seed=7), max_top=1)
    assert model.layers[-1].n_categories == 1
    assert model.top_root == 0
    assert model.top_edges == []
    assert 0.0 < model.top_root_prior < 1.0


def test_link_top_level_empty_model():
    from hltforest.hierarchy import HierarchicalModel

    empty = HierarchicalModel(layers=[], assignments=[], data=None)
    with pytest.raises(DataError):
        link_top_level(empty)


# -- export ----------------------------------------------------------------


def test_export_covers_every_node_once(deep_model):
    export = export_hierarchy(deep_model)
    ids = [node["id"] for node in export["nodes"]]
    want = [
        node_id(level, idx)
        for level in range(1, deep_model.depth + 1)
        for idx in range(deep_model.layer(level).n_categories)
    ]
    assert sorted(ids) == sorted(want)


def test_export_leaves_partition_items(deep_model):
    export = export_hierarchy(deep_model)
    level1_items: list[str] = []
    for node in export["nodes"]:
        if node["level"] == 1:
            assert node["children"] == []
            level1_items.extend(node["items"])
    assert sorted(level1_items, key=int) == [str(i) for i in range(deep_model.n_items)]
    assert len(set(level1_items)) == len(level1_items)


def test_export_parent_child_agree(deep_model):
    export = export_hierarchy(deep_model)
    by_id = {node["id"]: node for node in export["nodes"]}
    for node in export["nodes"]:
        for child in node["children"]:
            assert by_id[child]["parent"] == node["id"]
        if node["parent"] is None:
            assert node["level"] == deep_model.depth
        else:
            assert node["id"] in by_id[node["parent"]]["children"]


def test_export_orders_siblings_by_size(deep_model):
    export = export_hierarchy(deep_model)
    by_id = {node["id"]: node for node in export["nodes"]}
    for node in export["nodes"]:
        sizes = [len(by_id[c]["items"]) for c in node["children"]]
        assert sizes == sorted(sizes, reverse=True)


def test_export_rep_count_and_meta(deep_model):
    export = export_hierarchy(deep_model, reps_per_node=2, dataset="unit")
    for node in export["nodes"]:
        assert 1 <= len(node["reps"]) <= 2
    meta = export["meta"]
    assert meta["levels"] == deep_model.depth
    assert meta["items"] == deep_model.n_items
    assert meta["users"] == deep_model.data.n_users
    assert meta["categories_per_level"] == [f.n_categories for f in deep_model.layers]
    assert meta["dataset"] == "unit"
    assert meta["top_root"] == node_id(deep_model.depth, deep_model.top_root)


def test_export_applies_vocabulary(deep_model):
    vocab = Vocabulary(
        users=[], items=[f"item-{i:03d}" for i in range(deep_model.n_items)]
    )
    export = export_hierarchy(deep_model, vocab=vocab)
    node = export["nodes"][0]
    assert all(token.startswith("item-") for token in node["items"])
    assert all(rep["item"].startswith("item-") for rep in node["reps"])


def test_export_is_byte_stable(deep_model):
    a = json.dumps(export_hierarchy(deep_model), sort_keys=True)
    b = json.dumps(export_hierarchy(deep_model), sort_keys=True)
    assert a == b


# -- persistence -----------------------------------------------------------


def test_save_load_round_trip(deep_model, tmp_path):
    save_model(deep_model, tmp_path / "model")
    loaded = load_model(tmp_path / "model", deep_model.data)
    assert loaded.depth == deep_model.depth
    for orig, back in zip(deep_model.layers, loaded.layers):
        assert back.n_categories == orig.n_categories
        np.testing.assert_array_equal(back.ownership, orig.ownership)
        for a, b in zip(orig.categories, back.categories):
            # the loader lists members in column order; align before comparing
            ka, kb = np.argsort(a.items), np.argsort(b.items)
            np.testing.assert_array_equal(a.items[ka], b.items[kb])
            assert b.prior == pytest.approx(a.prior, abs=0.0)  # %.17g is exact
            np.testing.assert_array_equal(
                a.child_tables()[ka], b.child_tables()[kb]
            )
    for orig, back in zip(deep_model.assignments, loaded.assignments):
        assert orig == back
    assert loaded.top_root == deep_model.top_root
    assert loaded.top_edges == deep_model.top_edges
    for a, b in zip(deep_model.top_edge_tables, loaded.top_edge_tables):
        np.testing.assert_allclose(a, b, atol=1e-15)


def test_save_writes_manifest_rows(deep_model, tmp_path):
    save_model(deep_model, tmp_path / "model")
    manifest = (tmp_path / "model" / "layer-01.manifest.tsv").read_text().splitlines()
    assert manifest[0] == "category\tsize\tcolumns"
    assert len(manifest) == 1 + deep_model.layer(1).n_categories
    first = manifest[1].split("\t")
    assert parse_node_id(first[0]) == (1, 0)
    assert int(first[1]) == len(first[2].split())


def test_load_model_missing_layers(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(DataError):
        load_model(tmp_path / "empty", None)


def test_load_model_bad_magic(deep_model, tmp_path):
    save_model(deep_model, tmp_path / "model")
    victim = tmp_path / "model" / "layer-01.model"
    victim.write_text("NOT-A-MODEL\n" + victim.read_text().split("\n", 1)[1])
    with pytest.raises(DataError):
        load_model(tmp_path / "model", deep_model.data)


def test_load_model_wrong_width(deep_model, tmp_path):
    save_model(deep_model, tmp_path / "model")
    narrow = BinaryMatrix.from_pairs(4, 2, np.array([0]), np.array([1]))
    with pytest.raises(DataError):
        load_model(tmp_path / "model", narrow)


# -- timing log -------------------------------------------------------------


def test_timing_log_round_trip(deep_model, tmp_path):
    path = tmp_path / "timing.tsv"
    write_timing_log(path, deep_model, total_seconds=1.25)
    phases = read_timing_log(path)
    assert phases["Total Model"] == pytest.approx(1.25)
    assert "Cosine/MI" in phases
    for level in range(1, deep_model.depth + 1):
        assert f"Flat Layer-{level}" in phases
        assert f"H.A. Layer-{level}" in phases
    assert len(phases) == 2 + 2 * deep_model.depth
    sim_total = sum(t["similarity_s"] for t in deep_model.timings)
    assert phases["Cosine/MI"] == pytest.approx(sim_total, abs=1e-6)


def test_read_timing_log_rejects_garbage(tmp_path):
    bad = tmp_path / "t.tsv"
    bad.write_text("nope\n")
    with pytest.raises(DataError):
        read_timing_log(bad)
    bad.write_text("phase\tseconds\nrow-without-tab\n")
    with pytest.raises(DataError):
        read_timing_log(bad)
