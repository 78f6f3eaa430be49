/**
 * Hotkey layer. Decisions are keyboard-first: the whole classify loop is
 * reachable without touching the mouse.
 */

import type { TriageStore } from "./store.js";

export const KEY_HELP: ReadonlyArray<[string, string]> = [
  ["S", "mark Relevant (with any toggled keep tags)"],
  ["N", "mark Irrelevant (needs an exclusion tag or a note)"],
  ["K", "skip for now (stays in the queue)"],
  ["U", "undo the last decision made here"],
  ["T", "toggle keep-tag picker for the current card"],
  ["1-9", "toggle a tag in the open picker"],
  ["Enter", "submit Irrelevant from the justify panel / close picker"],
  ["Escape", "cancel the half-built decision"],
  ["R", "refresh from the server"],
  ["?", "show or hide this help"],
];

function isTypingTarget(target: EventTarget | null): target is HTMLElement {
  if (!(target instanceof HTMLElement)) return false;
  return (
    target.tagName === "INPUT" ||
    target.tagName === "TEXTAREA" ||
    target.isContentEditable
  );
}

/** Wire the hotkeys; returns a detach function. */
export function attachHotkeys(store: TriageStore, doc: Document): () => void {
  const onKeyDown = (event: KeyboardEvent) => {
    const typing = isTypingTarget(event.target);
    if (typing) {
      // while writing the justification note only Enter and Escape act
      const role = (event.target as HTMLElement).dataset.role;
      if (role !== "note") return;
      if (event.key === "Enter") {
        event.preventDefault();
        void store.commit();
      } else if (event.key === "Escape") {
        event.preventDefault();
        (event.target as HTMLElement).blur();
        store.cancelMode();
      }
      return;
    }
    if (event.ctrlKey || event.metaKey || event.altKey) return;

    if (event.key >= "1" && event.key <= "9") {
      event.preventDefault();
      store.toggleTagByIndex(Number(event.key) - 1);
      return;
    }

    switch (event.key.toLowerCase()) {
      case "s":
        event.preventDefault();
        void store.decide("Relevant");
        break;
      case "n":
        event.preventDefault();
        void store.decide("Irrelevant");
        break;
      case "k":
        event.preventDefault();
        void store.decide("Skipped");
        break;
      case "u":
        event.preventDefault();
        void store.undoLast();
        break;
      case "t":
        event.preventDefault();
        if (store.mode === "annotate") {
          void store.commit();
        } else {
          store.enterAnnotate();
        }
        break;
      case "enter":
        event.preventDefault();
        void store.commit();
        break;
      case "escape":
        event.preventDefault();
        if (store.helpOpen) {
          store.toggleHelp();
        } else {
          store.cancelMode();
        }
        break;
      case "r":
        event.preventDefault();
        void store.refresh();
        break;
      case "?":
        event.preventDefault();
        store.toggleHelp();
        break;
      default:
        break;
    }
  };

  doc.addEventListener("keydown", onKeyDown);
  return () => doc.removeEventListener("keydown", onKeyDown);
}
