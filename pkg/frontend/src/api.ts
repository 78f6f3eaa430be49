/**
 * Typed client for the bibcurate triage service.
 *
 * Every mutation the UI performs goes through this module; there is no
 * other channel to the backend. Shapes mirror docs/service-api.md.
 */

export type Verdict = "Relevant" | "Irrelevant" | "Skipped";

/** Tags a curator can attach to a decision. Order matters: the keyboard
 * layer maps digit keys onto these arrays by index. */
export const KEEP_TAGS = [
  "observation",
  "instrumentation",
  "fermi-paradox",
  "meta-seti",
  "history",
  "social-science",
  "commensal",
] as const;

export const EXCLUSION_TAGS = [
  "excluded-astrobiology-only",
  "excluded-fundamental-only",
  "excluded-pseudoscience-ufo",
  "excluded-book-review",
  "excluded-satire",
] as const;

export type RubricTag =
  | (typeof KEEP_TAGS)[number]
  | (typeof EXCLUSION_TAGS)[number];

export function isExclusionTag(tag: string): boolean {
  return (EXCLUSION_TAGS as readonly string[]).includes(tag);
}

export interface Highlight {
  field: string;
  term: string;
  position: number;
  expandedFrom: string | null;
}

export interface TagHint {
  tag: string;
  score: number;
  cue: string;
}

export interface TriageCard {
  bibcode: string;
  title: string;
  authors: string[];
  year: number;
  doctype: string;
  refereed: boolean;
  abstract: string;
  keywords: string[];
  highlights: Highlight[];
  hints: TagHint[];
  checklist?: string[];
}

export interface StateInfo {
  query: string;
  seq: number;
  pending: number;
  decidedThisSession: number;
  converged: boolean;
  counts: { main: number; excluded: number };
}

export interface QueueInfo {
  seq: number;
  pending: number;
  cards: TriageCard[];
}

export interface DecisionInput {
  bibcode: string;
  verdict: Verdict;
  tags: string[];
  note: string;
  expectedSeq: number;
}

export interface DecisionResult {
  seq: number;
  bibcode: string;
  verdict: Verdict;
}

export interface UndoResult {
  seq: number;
  bibcode: string;
  undoneVerdict: Verdict;
}

export interface MetricsColumn {
  memberCount: number;
  citingPapers: number;
  totalCitations: number;
  selfCitations: number;
  averageCitations: number;
  medianCitations: number;
  normalizedCitations: number;
  refereedCitations: number;
  averageRefereedCitations: number;
  medianRefereedCitations: number;
  normalizedRefereedCitations: number;
}

export interface StatsInfo {
  table: {
    totals: MetricsColumn;
    refereed: MetricsColumn;
    missingMembers: string[];
    danglingReferences: number;
  };
  histogram: {
    counts: Record<string, number>;
    missingMembers: string[];
  };
}

export interface SearchResult {
  query: string;
  total: number;
  hits: string[];
  warnings: string[];
}

/** Server answered with a non-2xx status. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** The request never reached the server (connection refused, DNS, ...). */
export class OfflineError extends Error {
  constructor(cause: unknown) {
    super(`service unreachable: ${cause instanceof Error ? cause.message : String(cause)}`);
    this.name = "OfflineError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

function detailToMessage(detail: unknown): string {
  if (typeof detail === "string") return detail;
  // pydantic validation errors arrive as a list of {msg, loc, ...}
  if (Array.isArray(detail)) {
    return detail
      .map((d) => (d && typeof d === "object" && "msg" in d ? String(d.msg) : JSON.stringify(d)))
      .join("; ");
  }
  return JSON.stringify(detail);
}

export class TriageApi {
  private readonly fetchFn: FetchLike;

  constructor(
    public readonly baseUrl: string,
    fetchFn?: FetchLike,
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async request(method: string, path: string, body?: unknown): Promise<Response> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new OfflineError(err);
    }
    if (!response.ok) {
      let message = `HTTP ${response.status}`;
      try {
        const payload = (await response.json()) as { detail?: unknown };
        if (payload && payload.detail !== undefined) {
          message = detailToMessage(payload.detail);
        }
      } catch {
        // non-JSON error body; keep the status line
      }
      throw new ApiError(response.status, message);
    }
    return response;
  }

  private async json<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.request(method, path, body);
    return (await response.json()) as T;
  }

  state(): Promise<StateInfo> {
    return this.json("GET", "/state");
  }

  queue(limit = 25): Promise<QueueInfo> {
    return this.json("GET", `/queue?limit=${limit}`);
  }

  decide(input: DecisionInput): Promise<DecisionResult> {
    return this.json("POST", "/decision", input);
  }

  undo(bibcode: string, expectedSeq: number): Promise<UndoResult> {
    return this.json("POST", "/undo", { bibcode, expectedSeq });
  }

  stats(): Promise<StatsInfo> {
    return this.json("GET", "/stats");
  }

  search(q: string, limit?: number): Promise<SearchResult> {
    return this.json("POST", "/search", limit === undefined ? { q } : { q, limit });
  }

  async digest(month: string): Promise<string> {
    const response = await this.request("GET", `/digest/${month}`);
    return response.text();
  }
}
