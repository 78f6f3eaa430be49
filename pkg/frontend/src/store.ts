/**
 * Client-side session state for the triage cockpit.
 *
 * All mutations flow through the TriageApi; this module adds the local
 * concerns: the visible queue window, the decision currently being
 * assembled (tags, note), optimistic queue advance with rollback, the
 * session undo stack, and offline handling. At most one decision or undo
 * request is in flight at a time.
 */

import {
  ApiError,
  EXCLUSION_TAGS,
  KEEP_TAGS,
  OfflineError,
  TriageApi,
  isExclusionTag,
} from "./api.js";
import type { StatsInfo, TriageCard, Verdict } from "./api.js";

/** browse: hotkeys decide; annotate: digits toggle keep tags;
 * justify: digits toggle exclusion tags, note input is live. */
export type Mode = "browse" | "annotate" | "justify";

export type Listener = () => void;

const QUEUE_WINDOW = 25;

export class TriageStore {
  // connection and request state
  online = true;
  busy = false;

  // server mirror
  seq = 0;
  pending = 0;
  decided = 0;
  converged = false;
  counts = { main: 0, excluded: 0 };
  queryText = "";
  cards: TriageCard[] = [];
  stats: StatsInfo | null = null;

  // decision being assembled for the current card
  mode: Mode = "browse";
  selected = new Set<string>();
  note = "";

  // transient messages
  banner: string | null = null;
  validation: string | null = null;
  helpOpen = false;

  // digest preview
  digestMonth = "";
  digestText: string | null = null;
  digestError: string | null = null;

  private cursor = 0;
  private undoStack: string[] = [];
  private listeners: Listener[] = [];

  constructor(private readonly api: TriageApi) {}

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  /** The card decisions apply to. The queue window keeps server order;
   * skipping only moves this cursor, so the list on screen always matches
   * the order the service reports. */
  current(): TriageCard | null {
    if (this.cards.length === 0) return null;
    return this.cards[Math.min(this.cursor, this.cards.length - 1)];
  }

  currentIndex(): number {
    return this.cards.length === 0 ? 0 : Math.min(this.cursor, this.cards.length - 1);
  }

  undoDepth(): number {
    return this.undoStack.length;
  }

  /** Re-pull state, queue window, and the stats panel from the server. */
  async refresh(): Promise<void> {
    try {
      const [state, queue, stats] = await Promise.all([
        this.api.state(),
        this.api.queue(QUEUE_WINDOW),
        this.api.stats(),
      ]);
      this.online = true;
      this.seq = state.seq;
      this.pending = state.pending;
      this.decided = state.decidedThisSession;
      this.converged = state.converged;
      this.counts = { ...state.counts };
      this.queryText = state.query;
      this.cards = queue.cards;
      this.stats = stats;
      if (this.cursor >= this.cards.length) this.cursor = 0;
    } catch (err) {
      if (err instanceof OfflineError) {
        this.online = false;
        this.banner = "Offline: service unreachable";
      } else if (err instanceof ApiError) {
        this.banner = err.message;
      } else {
        throw err;
      }
    }
    this.emit();
  }

  // -- decision assembly ------------------------------------------------------

  enterAnnotate(): void {
    if (!this.current()) return;
    this.mode = "annotate";
    this.validation = null;
    this.emit();
  }

  enterJustify(): void {
    if (!this.current()) return;
    this.mode = "justify";
    this.emit();
  }

  /** Escape: drop the half-built decision and go back to browsing. */
  cancelMode(): void {
    this.mode = "browse";
    this.selected.clear();
    this.note = "";
    this.validation = null;
    this.emit();
  }

  /** Enter: in justify mode submit the Irrelevant verdict, in annotate
   * mode keep the chosen tags and return to browsing. */
  async commit(): Promise<void> {
    if (this.mode === "justify") {
      await this.decide("Irrelevant");
    } else if (this.mode === "annotate") {
      this.mode = "browse";
      this.emit();
    }
  }

  toggleTag(tag: string): void {
    if (this.selected.has(tag)) {
      this.selected.delete(tag);
    } else {
      this.selected.add(tag);
    }
    this.validation = null;
    this.emit();
  }

  /** Digit keys address tags by position in the active mode's palette. */
  toggleTagByIndex(index: number): void {
    const palette = this.mode === "justify" ? EXCLUSION_TAGS : this.mode === "annotate" ? KEEP_TAGS : null;
    if (!palette || index < 0 || index >= palette.length) return;
    this.toggleTag(palette[index]);
  }

  setNote(text: string): void {
    this.note = text;
    if (text.trim() !== "") this.validation = null;
    this.emit();
  }

  toggleHelp(): void {
    this.helpOpen = !this.helpOpen;
    this.emit();
  }

  dismiss(): void {
    this.banner = null;
    this.emit();
  }

  // -- decisions --------------------------------------------------------------

  async decide(verdict: Verdict): Promise<boolean> {
    if (this.busy) return false;
    if (!this.online) {
      this.banner = "Offline: decision keys are disabled";
      this.emit();
      return false;
    }
    const card = this.current();
    if (!card) return false;

    const tags = [...this.selected];
    const note = this.note.trim();
    // same invariants the server enforces, checked here so the curator
    // gets inline feedback instead of a round trip
    if (verdict === "Irrelevant" && !tags.some(isExclusionTag) && note === "") {
      this.validation = "Irrelevant needs at least one exclusion tag or a note";
      this.mode = "justify";
      this.emit();
      return false;
    }
    if (verdict === "Relevant" && tags.some(isExclusionTag)) {
      this.validation = "Exclusion tags only apply to Irrelevant decisions";
      this.emit();
      return false;
    }

    // optimistic advance; the server answer (or a refresh on failure)
    // replaces this within one request round trip
    this.busy = true;
    this.banner = null;
    this.validation = null;
    const snapshot = {
      cards: this.cards,
      cursor: this.cursor,
      pending: this.pending,
      decided: this.decided,
      converged: this.converged,
      counts: { ...this.counts },
    };
    const index = this.currentIndex();
    if (verdict === "Skipped") {
      // record stays in the queue; just move on to the next card
      this.cursor = this.cards.length > 1 ? (index + 1) % this.cards.length : 0;
    } else {
      this.cards = this.cards.filter((_, i) => i !== index);
      this.cursor = Math.min(index, Math.max(0, this.cards.length - 1));
      this.pending -= 1;
      this.converged = this.pending === 0;
      if (verdict === "Relevant") this.counts.main += 1;
      else this.counts.excluded += 1;
    }
    this.decided += 1;
    this.emit();

    try {
      const result = await this.api.decide({
        bibcode: card.bibcode,
        verdict,
        tags,
        note,
        expectedSeq: this.seq,
      });
      this.seq = result.seq;
      this.undoStack.push(card.bibcode);
      this.selected.clear();
      this.note = "";
      this.mode = "browse";
      await this.refresh();
      return true;
    } catch (err) {
      this.cards = snapshot.cards;
      this.cursor = snapshot.cursor;
      this.pending = snapshot.pending;
      this.decided = snapshot.decided;
      this.converged = snapshot.converged;
      this.counts = snapshot.counts;
      if (err instanceof ApiError && err.status === 409) {
        this.banner = "Queue refreshed: another session decided first";
        await this.refresh();
      } else if (err instanceof ApiError) {
        this.validation = err.message;
      } else if (err instanceof OfflineError) {
        this.online = false;
        this.banner = "Offline: decision not recorded";
      } else {
        throw err;
      }
      return false;
    } finally {
      // busy covers the confirming refresh too: once it drops, the local
      // state is coherent with the server again
      this.busy = false;
      this.emit();
    }
  }

  async undoLast(): Promise<boolean> {
    if (this.busy) return false;
    if (!this.online) {
      this.banner = "Offline: decision keys are disabled";
      this.emit();
      return false;
    }
    const bibcode = this.undoStack[this.undoStack.length - 1];
    if (bibcode === undefined) {
      this.banner = "Nothing to undo in this session";
      this.emit();
      return false;
    }
    this.busy = true;
    this.banner = null;
    this.emit();
    try {
      const result = await this.api.undo(bibcode, this.seq);
      this.seq = result.seq;
      this.undoStack.pop();
      this.banner = `Undid ${result.undoneVerdict} for ${bibcode}`;
      await this.refresh();
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.banner = "Queue refreshed: another session decided first";
        await this.refresh();
      } else if (err instanceof ApiError) {
        // e.g. the decision was already undone elsewhere
        this.undoStack.pop();
        this.banner = err.message;
        await this.refresh();
      } else if (err instanceof OfflineError) {
        this.online = false;
        this.banner = "Offline: undo not recorded";
      } else {
        throw err;
      }
      return false;
    } finally {
      this.busy = false;
      this.emit();
    }
  }

  // -- digest preview ---------------------------------------------------------

  async loadDigest(month: string): Promise<void> {
    this.digestMonth = month;
    try {
      this.digestText = await this.api.digest(month);
      this.digestError = null;
    } catch (err) {
      this.digestText = null;
      if (err instanceof ApiError) {
        this.digestError = err.message;
      } else if (err instanceof OfflineError) {
        this.online = false;
        this.digestError = "Offline: service unreachable";
      } else {
        throw err;
      }
    }
    this.emit();
  }
}
