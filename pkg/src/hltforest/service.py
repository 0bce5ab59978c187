"""Read-only HTTP service over a learned hierarchy.

Three JSON endpoints back the browsing frontend: the full hierarchy shape,
paged node membership, and per-user recommendations with category
explanations. Static assets (the frontend bundle) are served from an
optional directory. Only GET is accepted; the service never mutates state,
so the threaded stdlib server is safe as-is.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import os
import posixpath
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, unquote, urlsplit

from .car import explain, rerank
from .data import BinaryMatrix, Vocabulary
from .errors import ConfigError
from .hierarchy import HierarchicalModel, export_hierarchy, node_id
from .recommenders import Recommender

_logger = logging.getLogger(__name__)

PAGE_SIZE = 200


class HierarchyService:
    """Request-independent state plus payload builders for each endpoint."""

    def __init__(
        self,
        model: HierarchicalModel,
        vocab: Vocabulary,
        recommender: Recommender,
        train: BinaryMatrix,
        *,
        k: int = 20,
        alpha: int = 5,
        reps_per_node: int = 5,
        pool_factor: int = 4,
        page_size: int = PAGE_SIZE,
        assets_dir: str | os.PathLike | None = None,
    ):
        if page_size < 1:
            raise ConfigError("page_size must be at least 1")
        self.model = model
        self.vocab = vocab
        self.recommender = recommender.fit(train)
        self.train = train
        self.k = k
        self.alpha = alpha
        self.reps_per_node = reps_per_node
        self.pool_factor = pool_factor
        self.page_size = page_size
        self.assets_dir = os.path.realpath(assets_dir) if assets_dir is not None else None
        export = export_hierarchy(model, vocab, reps_per_node)
        self._meta = export["meta"]
        self._nodes = {n["id"]: n for n in export["nodes"]}
        self._node_order = [n["id"] for n in export["nodes"]]

    def payload_hierarchy(self) -> dict:
        """Everything but the item memberships (those are paged per node)."""
        nodes = []
        for nid in self._node_order:
            n = self._nodes[nid]
            nodes.append(
                {
                    "id": n["id"],
                    "level": n["level"],
                    "parent": n["parent"],
                    "reps": n["reps"],
                    "children": n["children"],
                    "size": len(n["items"]),
                }
            )
        return {"meta": self._meta, "nodes": nodes}

    def payload_node(self, nid: str, page: int) -> dict | None:
        n = self._nodes.get(nid)
        if n is None:
            return None
        items = n["items"]
        total_pages = max(1, -(-len(items) // self.page_size))
        page = min(max(page, 0), total_pages - 1)
        start = page * self.page_size
        return {
            "id": n["id"],
            "level": n["level"],
            "parent": n["parent"],
            "reps": n["reps"],
            "children": n["children"],
            "size": len(items),
            "items_page": page,
            "page_size": self.page_size,
            "total_pages": total_pages,
            "items": items[start : start + self.page_size],
        }

    def payload_recommend(self, user_token: str) -> dict | None:
        idx = self.vocab.user_index.get(user_token)
        if idx is None:
            return None
        pool = self.recommender.recommend([idx], self.k * self.pool_factor)[0]
        ranked = rerank(pool, self.model, self.train.row_items(idx), self.k, self.alpha)
        items = []
        for rank, (it, score) in enumerate(zip(ranked.items, ranked.scores), start=1):
            ex = explain(self.model, int(it), self.reps_per_node)
            items.append(
                {
                    "rank": rank,
                    "item": self.vocab.items[int(it)],
                    "score": float(score),
                    "category": node_id(*ex.category),
                    "category_reps": [self.vocab.items[r] for r, _ in ex.reps],
                }
            )
        return {"user": user_token, "k": self.k, "items": items}

    def resolve_asset(self, path: str) -> str | None:
        """Map a URL path inside the assets directory, or None."""
        if self.assets_dir is None:
            return None
        rel = posixpath.normpath(unquote(path)).lstrip("/")
        if rel in ("", "."):
            rel = "index.html"
        full = os.path.realpath(os.path.join(self.assets_dir, rel))
        if full != self.assets_dir and not full.startswith(self.assets_dir + os.sep):
            return None
        if not os.path.isfile(full):
            return None
        return full


class _Handler(BaseHTTPRequestHandler):
    service: HierarchyService  # injected by make_server

    def log_message(self, fmt: str, *args) -> None:  # quiet by default
        _logger.debug("%s %s", self.address_string(), fmt % args)

    def _send_json(self, payload: dict, status: int = 200) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_file(self, path: str) -> None:
        ctype = mimetypes.guess_type(path)[0] or "application/octet-stream"
        with open(path, "rb") as fh:
            body = fh.read()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:  # noqa: N802 (stdlib naming)
        url = urlsplit(self.path)
        path = url.path
        if path == "/api/hierarchy":
            self._send_json(self.service.payload_hierarchy())
            return
        if path.startswith("/api/node/"):
            nid = unquote(path[len("/api/node/") :])
            query = parse_qs(url.query)
            try:
                page = int(query.get("items_page", ["0"])[0])
            except ValueError:
                self._send_json({"error": "items_page must be an integer"}, 400)
                return
            payload = self.service.payload_node(nid, page)
            if payload is None:
                self._send_json({"error": f"no node {nid}"}, 404)
                return
            self._send_json(payload)
            return
        if path.startswith("/api/recommend/"):
            token = unquote(path[len("/api/recommend/") :])
            payload = self.service.payload_recommend(token)
            if payload is None:
                self._send_json({"error": f"no user {token}"}, 404)
                return
            self._send_json(payload)
            return
        asset = self.service.resolve_asset(path)
        if asset is not None:
            self._send_file(asset)
            return
        self._send_json({"error": "not found"}, 404)

    def _reject(self) -> None:
        self._send_json({"error": "read-only service"}, 405)

    do_POST = do_PUT = do_DELETE = do_PATCH = _reject


def make_server(host: str, port: int, service: HierarchyService) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)
