/**
 * Tree view state: a pure reducer over interaction/fetch events.
 *
 * The store never talks to the network. The controller turns user intents
 * into fetches and feeds both the intents and the responses in as events;
 * the state is therefore a pure function of (fetched data, interaction
 * history), and replaying a recorded event log reproduces the exact view.
 */

import type {
  HierarchyMeta,
  HierarchyPayload,
  NodeDetail,
  NodeSummary,
  RecommendPayload,
} from "./types.js";

export type TreeEvent =
  | { kind: "hierarchy-requested" }
  | { kind: "hierarchy-loaded"; payload: HierarchyPayload }
  | { kind: "hierarchy-failed"; message: string }
  | { kind: "toggled"; id: string }
  | { kind: "node-requested"; id: string }
  | { kind: "node-loaded"; id: string; detail: NodeDetail }
  | { kind: "node-failed"; id: string; message: string }
  | { kind: "page-moved"; id: string; page: number }
  | { kind: "user-requested"; token: string }
  | { kind: "user-loaded"; token: string; payload: RecommendPayload | null }
  | { kind: "user-failed"; token: string; message: string }
  | { kind: "navigated"; id: string }
  | { kind: "searched"; query: string };

export interface TreeViewState {
  phase: "idle" | "loading" | "ready" | "error";
  errorMessage: string | null;
  meta: HierarchyMeta | null;
  directory: Record<string, NodeSummary>;
  rootIds: string[];
  expanded: Record<string, true>;
  selected: string | null;
  /** node id -> page number -> fetched page payload */
  details: Record<string, Record<number, NodeDetail>>;
  pageCursor: Record<string, number>;
  fetching: Record<string, true>;
  nodeErrors: Record<string, string>;
  user: { token: string; payload: RecommendPayload | null } | null;
  userPending: string | null;
  userError: string | null;
  query: string;
}

export function initialState(): TreeViewState {
  return {
    phase: "idle",
    errorMessage: null,
    meta: null,
    directory: {},
    rootIds: [],
    expanded: {},
    selected: null,
    details: {},
    pageCursor: {},
    fetching: {},
    nodeErrors: {},
    user: null,
    userPending: null,
    userError: null,
    query: "",
  };
}

function without<T>(record: Record<string, T>, key: string): Record<string, T> {
  if (!(key in record)) return record;
  const copy = { ...record };
  delete copy[key];
  return copy;
}

/** Ancestor chain of a node, nearest first, from the loaded directory. */
export function ancestorsOf(state: TreeViewState, id: string): string[] {
  const out: string[] = [];
  let at = state.directory[id]?.parent ?? null;
  while (at !== null) {
    out.push(at);
    at = state.directory[at]?.parent ?? null;
  }
  return out;
}

export function apply(state: TreeViewState, event: TreeEvent): TreeViewState {
  switch (event.kind) {
    case "hierarchy-requested":
      return { ...initialState(), phase: "loading", query: state.query };
    case "hierarchy-loaded": {
      const directory: Record<string, NodeSummary> = {};
      const rootIds: string[] = [];
      for (const node of event.payload.nodes) {
        directory[node.id] = node;
        if (node.parent === null) rootIds.push(node.id);
      }
      return {
        ...state,
        phase: "ready",
        errorMessage: null,
        meta: event.payload.meta,
        directory,
        rootIds,
      };
    }
    case "hierarchy-failed":
      // no partial tree: everything but the message resets
      return { ...initialState(), phase: "error", errorMessage: event.message };
    case "toggled": {
      if (event.id in state.expanded) {
        return { ...state, expanded: without(state.expanded, event.id) };
      }
      return { ...state, expanded: { ...state.expanded, [event.id]: true }, selected: event.id };
    }
    case "node-requested":
      return {
        ...state,
        fetching: { ...state.fetching, [event.id]: true },
        nodeErrors: without(state.nodeErrors, event.id),
      };
    case "node-loaded": {
      const pages = { ...(state.details[event.id] ?? {}) };
      pages[event.detail.items_page] = event.detail;
      return {
        ...state,
        fetching: without(state.fetching, event.id),
        details: { ...state.details, [event.id]: pages },
        pageCursor: { ...state.pageCursor, [event.id]: event.detail.items_page },
      };
    }
    case "node-failed":
      return {
        ...state,
        fetching: without(state.fetching, event.id),
        nodeErrors: { ...state.nodeErrors, [event.id]: event.message },
      };
    case "page-moved":
      return { ...state, pageCursor: { ...state.pageCursor, [event.id]: event.page } };
    case "user-requested":
      return { ...state, userPending: event.token, userError: null };
    case "user-loaded":
      return {
        ...state,
        userPending: null,
        user: { token: event.token, payload: event.payload },
      };
    case "user-failed":
      return { ...state, userPending: null, userError: event.message };
    case "navigated": {
      if (!(event.id in state.directory)) return state;
      const expanded: Record<string, true> = { ...state.expanded };
      expanded[event.id] = true;
      for (const ancestor of ancestorsOf(state, event.id)) expanded[ancestor] = true;
      return { ...state, expanded, selected: event.id };
    }
    case "searched":
      return { ...state, query: event.query };
  }
}

export interface VisibleRow {
  id: string;
  depth: number;
}

/**
 * Depth-first visible rows: a node shows iff every ancestor is expanded.
 * Children come back in the hierarchy's own (size-ranked) order.
 */
export function visibleRows(state: TreeViewState): VisibleRow[] {
  const out: VisibleRow[] = [];
  const walk = (id: string, depth: number) => {
    out.push({ id, depth });
    if (!(id in state.expanded)) return;
    const node = state.directory[id];
    if (!node) return;
    for (const child of node.children) walk(child, depth + 1);
  };
  for (const root of state.rootIds) walk(root, 0);
  return out;
}

/** Nodes whose representative tokens contain the query (case-insensitive). */
export function searchMatches(state: TreeViewState, limit = 20): NodeSummary[] {
  const q = state.query.trim().toLowerCase();
  if (!q) return [];
  const hits: NodeSummary[] = [];
  for (const root of state.rootIds) {
    const stack = [root];
    while (stack.length) {
      const id = stack.shift() as string;
      const node = state.directory[id];
      if (!node) continue;
      if (node.reps.some((r) => r.item.toLowerCase().includes(q))) hits.push(node);
      stack.push(...node.children);
      if (hits.length >= limit) return hits;
    }
  }
  return hits;
}

export class TreeStore {
  private current: TreeViewState = initialState();
  private events: TreeEvent[] = [];
  private listeners: Array<(state: TreeViewState) => void> = [];

  get state(): TreeViewState {
    return this.current;
  }

  get log(): readonly TreeEvent[] {
    return this.events;
  }

  dispatch(event: TreeEvent): void {
    this.events.push(event);
    this.current = apply(this.current, event);
    for (const listener of this.listeners) listener(this.current);
  }

  subscribe(listener: (state: TreeViewState) => void): void {
    this.listeners.push(listener);
  }

  hasPage(id: string, page: number): boolean {
    return page in (this.current.details[id] ?? {});
  }

  /** Rebuild a store by replaying a recorded event log. */
  static replay(events: readonly TreeEvent[]): TreeStore {
    const store = new TreeStore();
    for (const event of events) store.dispatch(event);
    return store;
  }
}
