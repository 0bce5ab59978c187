/**
 * Thin fetch client for the read-only hierarchy service.
 *
 * Every request is a GET — the UI never mutates anything — and concurrent
 * fetches of the same resource are deduplicated so double-clicks or racing
 * renders cannot issue the same request twice while one is in flight.
 * Payloads are shape-checked before they reach the store: a malformed
 * response is an error, never a partially rendered tree.
 */

import type { HierarchyPayload, NodeDetail, RecommendPayload } from "./types.js";

export class ApiError extends Error {
  constructor(message: string, readonly retryable: boolean = true) {
    super(message);
    this.name = "ApiError";
  }
}

export interface Api {
  hierarchy(): Promise<HierarchyPayload>;
  /** One membership page of one node. */
  node(id: string, page: number): Promise<NodeDetail>;
  /** Recommendations for a user token, or null when the service knows no such user. */
  recommend(token: string): Promise<RecommendPayload | null>;
}

function isRecord(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

function isStringArray(value: unknown): value is string[] {
  return Array.isArray(value) && value.every((v) => typeof v === "string");
}

function checkSummary(node: unknown): boolean {
  if (!isRecord(node)) return false;
  return (
    typeof node.id === "string" &&
    typeof node.level === "number" &&
    (node.parent === null || typeof node.parent === "string") &&
    Array.isArray(node.reps) &&
    node.reps.every((r) => isRecord(r) && typeof r.item === "string" && typeof r.mi === "number") &&
    isStringArray(node.children) &&
    typeof node.size === "number"
  );
}

export function checkHierarchyPayload(payload: unknown): payload is HierarchyPayload {
  if (!isRecord(payload) || !isRecord(payload.meta) || !Array.isArray(payload.nodes)) {
    return false;
  }
  return payload.nodes.every(checkSummary);
}

export function checkNodeDetail(payload: unknown): payload is NodeDetail {
  if (!checkSummary(payload)) return false;
  const p = payload as unknown as Record<string, unknown>;
  return (
    typeof p.items_page === "number" &&
    typeof p.page_size === "number" &&
    typeof p.total_pages === "number" &&
    isStringArray(p.items)
  );
}

export function checkRecommendPayload(payload: unknown): payload is RecommendPayload {
  if (!isRecord(payload) || typeof payload.user !== "string") return false;
  if (typeof payload.k !== "number" || !Array.isArray(payload.items)) return false;
  return payload.items.every(
    (it) =>
      isRecord(it) &&
      typeof it.rank === "number" &&
      typeof it.item === "string" &&
      typeof it.score === "number" &&
      typeof it.category === "string" &&
      isStringArray(it.category_reps),
  );
}

export class HttpApi implements Api {
  private inFlight = new Map<string, Promise<unknown>>();

  constructor(private baseUrl: string = "") {}

  private dedup<T>(key: string, run: () => Promise<T>): Promise<T> {
    const pending = this.inFlight.get(key);
    if (pending) return pending as Promise<T>;
    const promise = run().finally(() => this.inFlight.delete(key));
    this.inFlight.set(key, promise);
    return promise;
  }

  private async getJson(path: string): Promise<{ status: number; body: unknown }> {
    let response: Response;
    try {
      response = await fetch(this.baseUrl + path, { method: "GET" });
    } catch (err) {
      throw new ApiError(`service unreachable (${String(err)})`);
    }
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      throw new ApiError(`non-JSON response from ${path}`);
    }
    return { status: response.status, body };
  }

  hierarchy(): Promise<HierarchyPayload> {
    return this.dedup("hierarchy", async () => {
      const { status, body } = await this.getJson("/api/hierarchy");
      if (status !== 200 || !checkHierarchyPayload(body)) {
        throw new ApiError(`bad hierarchy response (status ${status})`);
      }
      return body;
    });
  }

  node(id: string, page: number): Promise<NodeDetail> {
    return this.dedup(`node:${id}:${page}`, async () => {
      const path = `/api/node/${encodeURIComponent(id)}?items_page=${page}`;
      const { status, body } = await this.getJson(path);
      if (status !== 200 || !checkNodeDetail(body)) {
        throw new ApiError(`bad node response for ${id} (status ${status})`);
      }
      return body;
    });
  }

  recommend(token: string): Promise<RecommendPayload | null> {
    return this.dedup(`recommend:${token}`, async () => {
      const { status, body } = await this.getJson(
        `/api/recommend/${encodeURIComponent(token)}`,
      );
      if (status === 404) return null;
      if (status !== 200 || !checkRecommendPayload(body)) {
        throw new ApiError(`bad recommendation response (status ${status})`);
      }
      return body;
    });
  }
}
