/**
 * Turns user intents into service fetches plus store events.
 *
 * Caching contract: a node's first expansion fetches its detail (children
 * confirmation + first membership page) exactly once; expand/collapse
 * cycles and repeated navigation reuse the cache. Paging fetches each
 * membership page at most once. The Api layer additionally deduplicates
 * racing in-flight requests for the same resource.
 */

import type { Api } from "./api.js";
import { TreeStore } from "./store.js";

export class Controller {
  constructor(
    private api: Api,
    readonly store: TreeStore,
  ) {}

  async init(): Promise<void> {
    this.store.dispatch({ kind: "hierarchy-requested" });
    try {
      const payload = await this.api.hierarchy();
      this.store.dispatch({ kind: "hierarchy-loaded", payload });
    } catch (err) {
      this.store.dispatch({ kind: "hierarchy-failed", message: String(err) });
    }
  }

  /** Fetch a node's page once; no-op when cached or already in flight. */
  private async ensurePage(id: string, page: number): Promise<void> {
    if (this.store.hasPage(id, page) || id in this.store.state.fetching) return;
    this.store.dispatch({ kind: "node-requested", id });
    try {
      const detail = await this.api.node(id, page);
      this.store.dispatch({ kind: "node-loaded", id, detail });
    } catch (err) {
      this.store.dispatch({ kind: "node-failed", id, message: String(err) });
    }
  }

  async toggle(id: string): Promise<void> {
    const expanding = !(id in this.store.state.expanded);
    this.store.dispatch({ kind: "toggled", id });
    if (expanding) await this.ensurePage(id, 0);
  }

  /** Retry a failed node fetch (inline row error control). */
  async retryNode(id: string): Promise<void> {
    await this.ensurePage(id, this.store.state.pageCursor[id] ?? 0);
  }

  async movePage(id: string, delta: number): Promise<void> {
    const pages = this.store.state.details[id];
    const any = pages && Object.values(pages)[0];
    if (!any) return;
    const current = this.store.state.pageCursor[id] ?? 0;
    const target = Math.min(Math.max(current + delta, 0), any.total_pages - 1);
    if (target === current) return;
    await this.ensurePage(id, target);
    this.store.dispatch({ kind: "page-moved", id, page: target });
  }

  async showUser(token: string): Promise<void> {
    this.store.dispatch({ kind: "user-requested", token });
    try {
      const payload = await this.api.recommend(token);
      this.store.dispatch({ kind: "user-loaded", token, payload });
    } catch (err) {
      this.store.dispatch({ kind: "user-failed", token, message: String(err) });
    }
  }

  /** Expand the whole path to a category (explanation / search click). */
  async navigateTo(id: string): Promise<void> {
    this.store.dispatch({ kind: "navigated", id });
    if (id in this.store.state.directory) await this.ensurePage(id, 0);
  }

  search(query: string): void {
    this.store.dispatch({ kind: "searched", query });
  }
}
