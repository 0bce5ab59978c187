/**
 * FakeApi: serves the byte-frozen service payloads from fixtures.json and
 * records every call, so tests can assert both what the UI reconstructed
 * and how many requests it took to get there.
 */

import type { Api } from "../src/api.js";
import { ApiError } from "../src/api.js";
import type { HierarchyPayload, NodeDetail, RecommendPayload } from "../src/types.js";
import fixtures from "./fixtures/fixtures.json";

export { fixtures };

export interface RecordedCall {
  method: string;
  resource: string;
}

export class FakeApi implements Api {
  calls: RecordedCall[] = [];
  counts = new Map<string, number>();
  /** When set, every request rejects with this error (outage simulation). */
  failWith: Error | null = null;

  private hit(resource: string): void {
    this.calls.push({ method: "GET", resource });
    this.counts.set(resource, (this.counts.get(resource) ?? 0) + 1);
    if (this.failWith) throw this.failWith;
  }

  async hierarchy(): Promise<HierarchyPayload> {
    this.hit("hierarchy");
    return structuredClone(fixtures.hierarchy) as HierarchyPayload;
  }

  async node(id: string, page: number): Promise<NodeDetail> {
    this.hit(`node:${id}:${page}`);
    const pages = (fixtures.nodes as Record<string, unknown[]>)[id];
    if (!pages) throw new ApiError(`no such category ${id}`, false);
    // the real service clamps out-of-range pages the same way
    const clamped = Math.min(Math.max(page, 0), pages.length - 1);
    return structuredClone(pages[clamped]) as NodeDetail;
  }

  async recommend(token: string): Promise<RecommendPayload | null> {
    this.hit(`recommend:${token}`);
    const payload = (fixtures.recommend as Record<string, unknown>)[token];
    return payload ? (structuredClone(payload) as RecommendPayload) : null;
  }
}
