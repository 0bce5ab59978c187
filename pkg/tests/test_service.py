"""HTTP service: JSON endpoints, paging, static assets, read-only behaviour."""

from __future__ import annotations

import json
import threading
import urllib.error
import urllib.request

import pytest

from hltforest.data import Vocabulary
from hltforest.errors import ConfigError
from hltforest.forest import LearnerConfig
from hltforest.hierarchy import export_hierarchy, learn_hierarchy
from hltforest.recommenders import ItemKNNRecommender
from hltforest.service import HierarchyService, make_server
from hltforest.synthetic import planted_flat


@pytest.fixture(scope="module")
def corpus():
    matrix, _ = planted_flat(n_blocks=4, block_size=3, n_users=400, seed=11)
    model = learn_hierarchy(matrix, LearnerConfig(seed=11), max_top=2)
    vocab = Vocabulary(
        users=[f"u{n:03d}" for n in range(400)],
        items=[f"track-{n:02d}" for n in range(12)],
    )
    return matrix, model, vocab


@pytest.fixture(scope="module")
def served(corpus, tmp_path_factory):
    matrix, model, vocab = corpus
    assets = tmp_path_factory.mktemp("assets")
    (assets / "index.html").write_text("<!doctype html><p>browse</p>", encoding="utf-8")
    (assets / "app.js").write_text("console.log('ready');", encoding="utf-8")
    (assets.parent / "outside.txt").write_text("secret", encoding="utf-8")
    service = HierarchyService(
        model,
        vocab,
        ItemKNNRecommender(),
        matrix,
        k=6,
        alpha=2,
        reps_per_node=3,
        page_size=5,
        assets_dir=str(assets),
    )
    server = make_server("127.0.0.1", 0, service)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_address[1]}"
    yield service, base
    server.shutdown()
    server.server_close()
    thread.join(timeout=5)


def get(base: str, path: str, method: str = "GET", body: bytes | None = None):
    req = urllib.request.Request(base + path, data=body, method=method)
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            return resp.status, resp.headers.get("Content-Type", ""), resp.read()
    except urllib.error.HTTPError as err:
        return err.code, err.headers.get("Content-Type", ""), err.read()


def get_json(base: str, path: str):
    status, ctype, body = get(base, path)
    assert ctype.startswith("application/json")
    return status, json.loads(body)


def test_hierarchy_endpoint_matches_export(served, corpus):
    _, model, vocab = corpus
    _, base = served
    status, payload = get_json(base, "/api/hierarchy")
    assert status == 200
    export = export_hierarchy(model, vocab, 3)
    assert payload["meta"] == export["meta"]
    want = {n["id"]: n for n in export["nodes"]}
    assert [n["id"] for n in payload["nodes"]] == [n["id"] for n in export["nodes"]]
    for node in payload["nodes"]:
        ref = want[node["id"]]
        assert "items" not in node  # membership is paged, not inlined
        assert node["size"] == len(ref["items"])
        assert node["children"] == ref["children"]
        assert node["parent"] == ref["parent"]
        assert node["reps"] == ref["reps"]


def test_node_pages_concatenate_to_full_membership(served, corpus):
    _, model, vocab = corpus
    _, base = served
    export = export_hierarchy(model, vocab, 3)
    # largest node paginates with page_size=5, leaves fit one page
    for ref in export["nodes"]:
        status, first = get_json(base, f"/api/node/{ref['id']}")
        assert status == 200
        assert first["size"] == len(ref["items"])
        assert first["page_size"] == 5
        assert first["total_pages"] == max(1, -(-len(ref["items"]) // 5))
        seen = []
        for page in range(first["total_pages"]):
            _, chunk = get_json(base, f"/api/node/{ref['id']}?items_page={page}")
            assert chunk["items_page"] == page
            assert len(chunk["items"]) <= 5
            seen.extend(chunk["items"])
        assert seen == ref["items"]


def test_node_page_is_clamped(served):
    _, base = served
    _, payload = get_json(base, "/api/hierarchy")
    nid = payload["nodes"][0]["id"]
    _, over = get_json(base, f"/api/node/{nid}?items_page=9999")
    assert over["items_page"] == over["total_pages"] - 1
    assert over["items"]
    _, under = get_json(base, f"/api/node/{nid}?items_page=-4")
    assert under["items_page"] == 0


def test_node_errors(served):
    _, base = served
    status, payload = get_json(base, "/api/node/z9.c99")
    assert status == 404
    assert "z9.c99" in payload["error"]
    status, payload = get_json(base, "/api/node/z1.c0?items_page=three")
    assert status == 400
    assert "items_page" in payload["error"]


def test_recommend_endpoint_explains_each_item(served, corpus):
    _, model, vocab = corpus
    _, base = served
    status, payload = get_json(base, "/api/recommend/u007")
    assert status == 200
    assert payload["user"] == "u007"
    assert payload["k"] == 6
    assert 0 < len(payload["items"]) <= 6
    export = export_hierarchy(model, vocab, 3)
    leaf_of = {
        tok: n["id"] for n in export["nodes"] if n["level"] == 1 for tok in n["items"]
    }
    node_ids = {n["id"] for n in export["nodes"]}
    seen = set()
    for rank, entry in enumerate(payload["items"], start=1):
        assert entry["rank"] == rank
        assert entry["item"] in vocab.item_index
        assert entry["item"] not in seen
        seen.add(entry["item"])
        assert entry["category"] == leaf_of[entry["item"]]
        assert entry["category"] in node_ids
        assert entry["item"] not in entry["category_reps"]
        assert len(entry["category_reps"]) <= 3
        for rep in entry["category_reps"]:
            assert rep in vocab.item_index


def test_recommend_unknown_user_404(served):
    _, base = served
    status, payload = get_json(base, "/api/recommend/u999")
    assert status == 404
    assert "u999" in payload["error"]


def test_static_assets_served(served):
    _, base = served
    status, ctype, body = get(base, "/")
    assert status == 200
    assert ctype.startswith("text/html")
    assert b"browse" in body
    status, ctype, body = get(base, "/app.js")
    assert status == 200
    assert "javascript" in ctype
    status, _, _ = get(base, "/index.html")
    assert status == 200


def test_asset_traversal_and_misses_are_404(served):
    _, base = served
    for path in ("/../outside.txt", "/%2e%2e/outside.txt", "/missing.css"):
        status, ctype, _ = get(base, path)
        assert status == 404
        assert ctype.startswith("application/json")


def test_writes_are_rejected(served):
    _, base = served
    for method in ("POST", "PUT", "DELETE", "PATCH"):
        status, _, body = get(base, "/api/hierarchy", method=method, body=b"{}")
        assert status == 405
        assert b"read-only" in body


def test_no_assets_dir_means_json_404(corpus):
    matrix, model, vocab = corpus
    service = HierarchyService(model, vocab, ItemKNNRecommender(), matrix)
    assert service.resolve_asset("/index.html") is None
    assert service.payload_node("nope", 0) is None


def test_page_size_validated(corpus):
    matrix, model, vocab = corpus
    with pytest.raises(ConfigError):
        HierarchyService(model, vocab, ItemKNNRecommender(), matrix, page_size=0)
