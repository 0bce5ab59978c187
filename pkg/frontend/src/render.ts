/**
 * Pure view: TreeViewState in, HTML string out.
 *
 * No DOM reads, no network, no stored element state — re-rendering after
 * every event keeps the markup a pure function of the state, which is what
 * makes interaction replays reproduce the view exactly. Interactive
 * elements carry data-action/data-id attributes; the bootstrap wires one
 * delegated listener for all of them.
 */

import {
  searchMatches,
  visibleRows,
  type TreeViewState,
} from "./store.js";
import type { NodeSummary, RecommendPayload } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

/** Category label: its representative items, most informative first. */
export function nodeLabel(node: NodeSummary): string {
  return node.reps.map((r) => r.item).join(" · ");
}

function repsTitle(node: NodeSummary): string {
  return node.reps.map((r) => `${r.item} (${r.mi.toFixed(3)})`).join(", ");
}

function renderItemListing(state: TreeViewState, id: string): string {
  if (id in state.fetching) {
    return `<div class="listing pending">loading items…</div>`;
  }
  const rowError = state.nodeErrors[id];
  if (rowError) {
    return (
      `<div class="listing row-error">${escapeHtml(rowError)} ` +
      `<button data-action="retry-node" data-id="${escapeHtml(id)}">retry</button></div>`
    );
  }
  const page = state.pageCursor[id] ?? 0;
  const detail = state.details[id]?.[page];
  if (!detail) return "";
  const items = detail.items
    .map((item) => `<li class="item">${escapeHtml(item)}</li>`)
    .join("");
  const pager =
    detail.total_pages > 1
      ? `<div class="pager">` +
        `<button data-action="prev-page" data-id="${escapeHtml(id)}" ${page === 0 ? "disabled" : ""}>‹</button>` +
        `<span>page ${page + 1} / ${detail.total_pages}</span>` +
        `<button data-action="next-page" data-id="${escapeHtml(id)}" ${page === detail.total_pages - 1 ? "disabled" : ""}>›</button>` +
        `</div>`
      : "";
  return `<div class="listing"><ul>${items}</ul>${pager}</div>`;
}

function renderTree(state: TreeViewState): string {
  const parts: string[] = [];
  for (const { id, depth } of visibleRows(state)) {
    const node = state.directory[id];
    if (!node) continue;
    const expanded = id in state.expanded;
    const classes = ["row"];
    if (state.selected === id) classes.push("selected");
    const marker = expanded ? "▾" : "▸";
    parts.push(
      `<div class="${classes.join(" ")}" data-node="${escapeHtml(id)}" style="--depth:${depth}">` +
        `<button data-action="toggle" data-id="${escapeHtml(id)}" aria-expanded="${expanded}">${marker}</button>` +
        `<span class="label" tabindex="0" title="${escapeHtml(repsTitle(node))}">${escapeHtml(nodeLabel(node))}</span>` +
        `<span class="meta">L${node.level} · ${node.size} items</span>` +
        `</div>`,
    );
    // leaf categories open their item listing; higher nodes reveal children
    if (expanded && node.level === 1) parts.push(renderItemListing(state, id));
    if (expanded && node.level > 1 && state.nodeErrors[id]) {
      parts.push(renderItemListing(state, id));
    }
  }
  return `<div class="tree">${parts.join("")}</div>`;
}

function renderSearch(state: TreeViewState): string {
  const box =
    `<input data-role="search" type="search" placeholder="search representative items" ` +
    `value="${escapeHtml(state.query)}">`;
  const matches = searchMatches(state);
  const list = state.query.trim()
    ? `<ul class="matches">` +
      (matches.length
        ? matches
            .map(
              (node) =>
                `<li><button data-action="goto-category" data-id="${escapeHtml(node.id)}">` +
                `${escapeHtml(nodeLabel(node))}</button></li>`,
            )
            .join("")
        : `<li class="empty">no category mentions “${escapeHtml(state.query)}”</li>`) +
      `</ul>`
    : "";
  return `<div class="search">${box}${list}</div>`;
}

function renderRecommendations(state: TreeViewState): string {
  const form =
    `<form data-role="user-form">` +
    `<input data-role="user-input" placeholder="user token, e.g. u007" ` +
    `value="${escapeHtml(state.user?.token ?? state.userPending ?? "")}">` +
    `<button type="submit">show</button></form>`;
  let body = "";
  if (state.userPending !== null) {
    body = `<p class="pending">fetching…</p>`;
  } else if (state.userError) {
    body = `<p class="row-error">${escapeHtml(state.userError)}</p>`;
  } else if (state.user) {
    body = state.user.payload
      ? renderRecList(state.user.payload)
      : `<p class="empty">No listening history for “${escapeHtml(state.user.token)}”.</p>`;
  }
  return `<aside class="recs"><h2>Recommendations</h2>${form}${body}</aside>`;
}

function renderRecList(payload: RecommendPayload): string {
  const rows = payload.items
    .map(
      (it) =>
        `<li><span class="rank">${it.rank}.</span> ` +
        `<span class="rec-item">${escapeHtml(it.item)}</span> ` +
        `<span class="score">${it.score.toFixed(3)}</span><br>` +
        `because you listen to ` +
        `<button class="why" data-action="goto-category" data-id="${escapeHtml(it.category)}">` +
        `${escapeHtml(it.category_reps.join(", "))}</button></li>`,
    )
    .join("");
  return `<ol class="rec-list">${rows}</ol>`;
}

export function render(state: TreeViewState): string {
  switch (state.phase) {
    case "idle":
    case "loading":
      return `<div class="banner">loading hierarchy…</div>`;
    case "error":
      return (
        `<div class="banner error">${escapeHtml(state.errorMessage ?? "load failed")} ` +
        `<button data-action="retry">retry</button></div>`
      );
    case "ready":
      return renderSearch(state) + renderTree(state) + renderRecommendations(state);
  }
}
