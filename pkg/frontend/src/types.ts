/**
 * JSON vocabulary of the backing read-only service.
 *
 * These mirror the payloads of /api/hierarchy, /api/node/{id}?items_page=N
 * and /api/recommend/{user} exactly; the UI never consumes anything else.
 */

export interface NodeRep {
  item: string;
  mi: number;
}

/** One hierarchy node as listed by /api/hierarchy (membership omitted). */
export interface NodeSummary {
  id: string;
  level: number;
  parent: string | null;
  reps: NodeRep[];
  children: string[];
  size: number;
}

export interface HierarchyMeta {
  levels: number;
  users: number;
  items: number;
  categories_per_level: number[];
  top_root: string | null;
  top_edges: [string, string][];
  [extra: string]: unknown;
}

export interface HierarchyPayload {
  meta: HierarchyMeta;
  nodes: NodeSummary[];
}

/** One node with a single membership page, from /api/node/{id}. */
export interface NodeDetail extends NodeSummary {
  items_page: number;
  page_size: number;
  total_pages: number;
  items: string[];
}

export interface RecommendedItem {
  rank: number;
  item: string;
  score: number;
  category: string;
  category_reps: string[];
}

export interface RecommendPayload {
  user: string;
  k: number;
  items: RecommendedItem[];
}
