/**
 * Entry point: builds the client stack and wires mouse fallbacks for the
 * hotkey actions. index.html calls boot(document); tests call it with an
 * injected service URL.
 */

import { TriageApi } from "./api.js";
import { attachHotkeys } from "./keyboard.js";
import { bindUi, render } from "./render.js";
import type { Ui } from "./render.js";
import { TriageStore } from "./store.js";

export const DEFAULT_BASE = "http://127.0.0.1:8642";

export interface App {
  api: TriageApi;
  store: TriageStore;
  ui: Ui;
  detach: () => void;
}

export function boot(doc: Document, baseUrl?: string): App {
  const search = doc.defaultView?.location.search ?? "";
  const base = baseUrl ?? new URLSearchParams(search).get("api") ?? DEFAULT_BASE;
  const api = new TriageApi(base);
  const store = new TriageStore(api);
  const ui = bindUi(doc);

  store.subscribe(() => render(store, ui));
  const detachKeys = attachHotkeys(store, doc);

  ui.buttons.relevant.addEventListener("click", () => void store.decide("Relevant"));
  ui.buttons.irrelevant.addEventListener("click", () => void store.decide("Irrelevant"));
  ui.buttons.skip.addEventListener("click", () => void store.decide("Skipped"));
  ui.buttons.undo.addEventListener("click", () => void store.undoLast());

  // tag chips are re-rendered, so delegate from their container
  ui.tagPanel.addEventListener("click", (event) => {
    const target = event.target as HTMLElement | null;
    const chip = target?.closest("[data-tag]") as HTMLElement | null;
    if (chip?.dataset.tag) store.toggleTag(chip.dataset.tag);
  });

  ui.note.addEventListener("input", () => store.setNote(ui.note.value));

  ui.banner.addEventListener("click", () => store.dismiss());

  const loadDigest = () => {
    if (ui.digestMonth.value) void store.loadDigest(ui.digestMonth.value);
  };
  ui.digestLoad.addEventListener("click", loadDigest);
  ui.digestMonth.addEventListener("keydown", (event) => {
    if (event.key === "Enter") {
      event.preventDefault();
      loadDigest();
    }
  });

  // reconnect attempts: any successful refresh clears the offline state
  const win = doc.defaultView;
  win?.addEventListener("online", () => void store.refresh());
  win?.addEventListener("focus", () => {
    if (!store.online) void store.refresh();
  });

  void store.refresh();

  return { api, store, ui, detach: detachKeys };
}
