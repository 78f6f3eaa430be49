/**
 * DOM rendering. The skeleton lives in index.html; this module fills the
 * dynamic regions from the store on every change. State is small (one
 * card window, one stats table) so regions are rebuilt wholesale.
 */

import { EXCLUSION_TAGS, KEEP_TAGS } from "./api.js";
import type { Highlight, StatsInfo, TriageCard } from "./api.js";
import { KEY_HELP } from "./keyboard.js";
import type { TriageStore } from "./store.js";

export interface Ui {
  statusPill: HTMLElement;
  converged: HTMLElement;
  pending: HTMLElement;
  decided: HTMLElement;
  countMain: HTMLElement;
  countExcluded: HTMLElement;
  queryText: HTMLElement;
  banner: HTMLElement;
  card: HTMLElement;
  tagPanel: HTMLElement;
  note: HTMLInputElement;
  validation: HTMLElement;
  upNext: HTMLElement;
  statsTable: HTMLElement;
  histogram: HTMLElement;
  statsNotes: HTMLElement;
  digestMonth: HTMLInputElement;
  digestLoad: HTMLButtonElement;
  digestOut: HTMLElement;
  help: HTMLElement;
  buttons: {
    relevant: HTMLButtonElement;
    irrelevant: HTMLButtonElement;
    skip: HTMLButtonElement;
    undo: HTMLButtonElement;
  };
}

function grab<T extends HTMLElement>(doc: Document, id: string): T {
  const el = doc.getElementById(id);
  if (!el) throw new Error(`missing ui element #${id}`);
  return el as T;
}

export function bindUi(doc: Document): Ui {
  return {
    statusPill: grab(doc, "status-pill"),
    converged: grab(doc, "converged"),
    pending: grab(doc, "stat-pending"),
    decided: grab(doc, "stat-decided"),
    countMain: grab(doc, "count-main"),
    countExcluded: grab(doc, "count-excluded"),
    queryText: grab(doc, "query-text"),
    banner: grab(doc, "banner"),
    card: grab(doc, "card"),
    tagPanel: grab(doc, "tag-panel"),
    note: grab<HTMLInputElement>(doc, "note"),
    validation: grab(doc, "validation"),
    upNext: grab(doc, "up-next"),
    statsTable: grab(doc, "stats-table"),
    histogram: grab(doc, "histogram"),
    statsNotes: grab(doc, "stats-notes"),
    digestMonth: grab<HTMLInputElement>(doc, "digest-month"),
    digestLoad: grab<HTMLButtonElement>(doc, "digest-load"),
    digestOut: grab(doc, "digest-out"),
    help: grab(doc, "help"),
    buttons: {
      relevant: grab<HTMLButtonElement>(doc, "btn-relevant"),
      irrelevant: grab<HTMLButtonElement>(doc, "btn-irrelevant"),
      skip: grab<HTMLButtonElement>(doc, "btn-skip"),
      undo: grab<HTMLButtonElement>(doc, "btn-undo"),
    },
  };
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function escapeRegex(text: string): string {
  return text.replace(/[.*+?^${}()|[\]\\]/g, "\\$&");
}

/** Escape, then wrap every whole-word occurrence of the matched terms in
 * <mark>. Terms come from the server's match explanations, which are
 * plain lowercase tokens, so escaping the text first cannot break them. */
export function markTerms(text: string, terms: string[]): string {
  const escaped = escapeHtml(text);
  const unique = [...new Set(terms.filter((t) => t !== ""))];
  if (unique.length === 0) return escaped;
  unique.sort((a, b) => b.length - a.length);
  const pattern = new RegExp(`\\b(${unique.map(escapeRegex).join("|")})\\b`, "gi");
  return escaped.replace(pattern, "<mark>$1</mark>");
}

function termsFor(highlights: Highlight[], field: string): string[] {
  return highlights.filter((h) => h.field === field).map((h) => h.term);
}

function matchSummary(highlights: Highlight[]): string {
  if (highlights.length === 0) return "";
  const parts = highlights.map((h) => {
    const via = h.expandedFrom ? ` via ${escapeHtml(h.expandedFrom)}` : "";
    return `<code>${escapeHtml(h.term)}</code> <small>(${escapeHtml(h.field)}${via})</small>`;
  });
  return `<p class="matches">Matched: ${parts.join(", ")}</p>`;
}

function renderCard(store: TriageStore, ui: Ui): void {
  const card = store.current();
  if (!card) {
    const note = store.converged
      ? "Queue is empty: every hit of the session query has been classified."
      : "No card loaded.";
    ui.card.innerHTML = `<p class="empty">${note}</p>`;
    return;
  }
  const hintChips = card.hints
    .map(
      (h) =>
        `<span class="chip hint" title="${escapeHtml(h.cue)}">${escapeHtml(h.tag)}</span>`,
    )
    .join(" ");
  const checklist = card.checklist
    ? `<div class="checklist"><h3>Commensal litmus</h3><ol>${card.checklist
        .map((item) => `<li>${escapeHtml(item)}</li>`)
        .join("")}</ol></div>`
    : "";
  const keywords = card.keywords.length
    ? `<p class="keywords">${markTerms(card.keywords.join("; "), termsFor(card.highlights, "keywords"))}</p>`
    : "";
  ui.card.innerHTML = `
    <div class="card-head">
      <span class="bibcode">${escapeHtml(card.bibcode)}</span>
      <span class="badge">${escapeHtml(card.doctype)}</span>
      <span class="badge">${card.year}</span>
      ${card.refereed ? '<span class="badge refereed">refereed</span>' : ""}
    </div>
    <h2>${markTerms(card.title, termsFor(card.highlights, "title"))}</h2>
    <p class="authors">${escapeHtml(card.authors.join("; "))}</p>
    <p class="abstract">${markTerms(card.abstract, termsFor(card.highlights, "abstract"))}</p>
    ${keywords}
    ${matchSummary(card.highlights)}
    ${card.hints.length ? `<p class="hints">Hints: ${hintChips}</p>` : ""}
    ${checklist}
  `;
}

function chip(tag: string, index: number | null, selected: boolean): string {
  const keycap = index === null ? "" : `<kbd>${index + 1}</kbd> `;
  return `<button type="button" class="chip tag${selected ? " selected" : ""}" data-tag="${tag}">${keycap}${tag}</button>`;
}

function renderTagPanel(store: TriageStore, ui: Ui): void {
  const picked = [...store.selected];
  if (store.mode === "annotate") {
    ui.tagPanel.innerHTML =
      `<p class="panel-title">Keep tags (digits toggle, Enter closes)</p>` +
      KEEP_TAGS.map((t, i) => chip(t, i, store.selected.has(t))).join(" ");
  } else if (store.mode === "justify") {
    ui.tagPanel.innerHTML =
      `<p class="panel-title">Why exclude? (digits toggle, Enter submits, Tab to note)</p>` +
      EXCLUSION_TAGS.map((t, i) => chip(t, i, store.selected.has(t))).join(" ");
  } else if (picked.length > 0) {
    ui.tagPanel.innerHTML =
      `<p class="panel-title">Tags for next decision</p>` +
      picked.map((t) => chip(t, null, true)).join(" ");
  } else {
    ui.tagPanel.innerHTML = "";
  }
}

function decimal(value: number): string {
  return value.toFixed(1);
}

const TABLE_ROWS: ReadonlyArray<[string, keyof StatsInfo["table"]["totals"], boolean]> = [
  ["Number of citing papers", "citingPapers", false],
  ["Total citations", "totalCitations", false],
  ["Number of self-citations", "selfCitations", false],
  ["Average citations", "averageCitations", true],
  ["Median citations", "medianCitations", false],
  ["Normalized citations", "normalizedCitations", true],
  ["Refereed citations", "refereedCitations", false],
  ["Average refereed citations", "averageRefereedCitations", true],
  ["Median refereed citations", "medianRefereedCitations", false],
  ["Normalized refereed citations", "normalizedRefereedCitations", true],
];

function renderStats(stats: StatsInfo | null, ui: Ui): void {
  if (!stats) {
    ui.statsTable.innerHTML = "";
    ui.histogram.innerHTML = "";
    ui.statsNotes.textContent = "";
    return;
  }
  const { totals, refereed } = stats.table;
  const rows = TABLE_ROWS.map(([label, key, isDecimal]) => {
    const fmt = (v: number) => (isDecimal ? decimal(v) : String(v));
    return `<tr><td>${label}</td><td>${fmt(totals[key] as number)}</td><td>${fmt(refereed[key] as number)}</td></tr>`;
  }).join("");
  ui.statsTable.innerHTML = `
    <table>
      <thead><tr><th></th><th>Totals</th><th>Refereed</th></tr></thead>
      <tbody>
        <tr><td>Members</td><td>${totals.memberCount}</td><td>${refereed.memberCount}</td></tr>
        ${rows}
      </tbody>
    </table>
  `;
  const years = Object.keys(stats.histogram.counts).sort();
  const max = Math.max(1, ...years.map((y) => stats.histogram.counts[y]));
  ui.histogram.innerHTML = years
    .map((y) => {
      const n = stats.histogram.counts[y];
      const width = Math.round((n / max) * 100);
      return `<div class="hist-row"><span class="hist-year">${y}</span><span class="hist-bar" style="width:${width}%"></span><span class="hist-count">${n}</span></div>`;
    })
    .join("");
  const notes: string[] = [];
  if (stats.table.danglingReferences > 0) {
    notes.push(`${stats.table.danglingReferences} reference(s) point outside the corpus`);
  }
  if (stats.table.missingMembers.length > 0) {
    notes.push(`missing members: ${stats.table.missingMembers.join(", ")}`);
  }
  ui.statsNotes.textContent = notes.join("; ");
}

function renderHelp(store: TriageStore, ui: Ui): void {
  if (!store.helpOpen) {
    ui.help.hidden = true;
    return;
  }
  ui.help.hidden = false;
  const keys = KEY_HELP.map(
    ([key, what]) => `<tr><td><kbd>${key}</kbd></td><td>${what}</td></tr>`,
  ).join("");
  ui.help.innerHTML = `
    <div class="help-body">
      <h3>Keys</h3>
      <table>${keys}</table>
      <h3>Tags</h3>
      <p>Keep: ${KEEP_TAGS.join(", ")}</p>
      <p>Exclude: ${EXCLUSION_TAGS.join(", ")}</p>
      <p>An Irrelevant decision must carry an exclusion tag or a note.</p>
    </div>
  `;
}

export function render(store: TriageStore, ui: Ui): void {
  ui.statusPill.textContent = store.online ? (store.busy ? "saving" : "online") : "offline";
  ui.statusPill.classList.toggle("offline", !store.online);

  ui.converged.textContent = store.converged ? "converged" : "in progress";
  ui.converged.classList.toggle("lit", store.converged);

  ui.pending.textContent = String(store.pending);
  ui.decided.textContent = String(store.decided);
  ui.countMain.textContent = String(store.counts.main);
  ui.countExcluded.textContent = String(store.counts.excluded);
  ui.queryText.textContent = store.queryText;

  ui.banner.textContent = store.banner ?? "";
  ui.banner.hidden = store.banner === null;

  ui.validation.textContent = store.validation ?? "";
  ui.validation.hidden = store.validation === null;

  renderCard(store, ui);
  renderTagPanel(store, ui);

  // the note input is static in the skeleton so focus survives re-renders
  ui.note.hidden = store.mode !== "justify";
  if (ui.note.value !== store.note) ui.note.value = store.note;

  const active = store.currentIndex();
  ui.upNext.innerHTML = store.cards
    .map(
      (c: TriageCard, i: number) =>
        `<li class="${i === active ? "active" : ""}">${escapeHtml(c.bibcode)} ${escapeHtml(c.title)}</li>`,
    )
    .join("");

  renderStats(store.stats, ui);

  ui.digestOut.textContent = store.digestError ?? store.digestText ?? "";

  const locked = store.busy || !store.online;
  ui.buttons.relevant.disabled = locked || !store.current();
  ui.buttons.irrelevant.disabled = locked || !store.current();
  ui.buttons.skip.disabled = locked || !store.current();
  ui.buttons.undo.disabled = locked || store.undoDepth() === 0;

  renderHelp(store, ui);
}
