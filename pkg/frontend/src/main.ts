/**
 * Bootstrap: one store, one controller, one delegated event listener.
 * Served as a static bundle by the backing CLI's serve subcommand.
 */

import { HttpApi } from "./api.js";
import { Controller } from "./controller.js";
import { render } from "./render.js";
import { TreeStore } from "./store.js";

function start(): void {
  const container = document.getElementById("app");
  if (!container) throw new Error("missing #app container");

  const store = new TreeStore();
  const controller = new Controller(new HttpApi(), store);
  store.subscribe((state) => {
    // re-rendering replaces the search box; keep focus and caret across it
    const active = document.activeElement;
    const hadFocus =
      active instanceof HTMLInputElement && active.dataset.role === "search";
    const caret = hadFocus ? active.selectionStart : null;
    container.innerHTML = render(state);
    const search = container.querySelector<HTMLInputElement>("[data-role=search]");
    search?.addEventListener("input", () => controller.search(search.value));
    if (hadFocus && search) {
      search.focus();
      if (caret !== null) search.setSelectionRange(caret, caret);
    }
  });

  container.addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest<HTMLElement>("[data-action]");
    if (!target) return;
    const id = target.dataset.id ?? "";
    switch (target.dataset.action) {
      case "toggle":
        void controller.toggle(id);
        break;
      case "retry":
        void controller.init();
        break;
      case "retry-node":
        void controller.retryNode(id);
        break;
      case "prev-page":
        void controller.movePage(id, -1);
        break;
      case "next-page":
        void controller.movePage(id, +1);
        break;
      case "goto-category":
        void controller.navigateTo(id);
        break;
    }
  });

  container.addEventListener("submit", (event) => {
    const form = (event.target as HTMLElement).closest("[data-role=user-form]");
    if (!form) return;
    event.preventDefault();
    const input = form.querySelector<HTMLInputElement>("[data-role=user-input]");
    if (input && input.value.trim()) void controller.showUser(input.value.trim());
  });

  void controller.init();
}

start();
