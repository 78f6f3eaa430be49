import { beforeEach, describe, expect, it } from "vitest";

import { TriageApi } from "../src/api.js";
import { TriageStore } from "../src/store.js";
import { FAKE_CARDS, FAKE_QUERY, FakeServer } from "./fake-server.js";

let server: FakeServer;
let store: TriageStore;

beforeEach(async () => {
  server = new FakeServer();
  store = new TriageStore(new TriageApi("http://fake:1", server.fetch));
  await store.refresh();
});

describe("refresh", () => {
  it("mirrors state, queue, and stats from the server", () => {
    expect(store.online).toBe(true);
    expect(store.seq).toBe(0);
    expect(store.pending).toBe(4);
    expect(store.decided).toBe(0);
    expect(store.converged).toBe(false);
    expect(store.counts).toEqual({ main: 0, excluded: 0 });
    expect(store.queryText).toBe(FAKE_QUERY);
    expect(store.cards.map((c) => c.bibcode)).toEqual(server.queue());
    expect(store.stats?.table.totals.memberCount).toBe(6);
    expect(store.current()?.bibcode).toBe(FAKE_CARDS[0].bibcode);
  });

  it("goes offline with a banner when the service is unreachable", async () => {
    server.offline = true;
    await store.refresh();
    expect(store.online).toBe(false);
    expect(store.banner).toBe("Offline: service unreachable");
    server.offline = false;
    await store.refresh();
    expect(store.online).toBe(true);
  });

  it("notifies subscribers and honors unsubscribe", async () => {
    let ticks = 0;
    const off = store.subscribe(() => {
      ticks += 1;
    });
    await store.refresh();
    expect(ticks).toBe(1);
    off();
    await store.refresh();
    expect(ticks).toBe(1);
  });
});

describe("relevant decisions", () => {
  it("advances optimistically and confirms against the server", async () => {
    const first = store.current()!.bibcode;
    const ok = await store.decide("Relevant");
    expect(ok).toBe(true);
    expect(store.seq).toBe(1);
    expect(store.pending).toBe(3);
    expect(store.decided).toBe(1);
    expect(store.counts).toEqual({ main: 1, excluded: 0 });
    expect(store.cards.map((c) => c.bibcode)).toEqual(server.queue());
    expect(store.cards.some((c) => c.bibcode === first)).toBe(false);
    expect(store.undoDepth()).toBe(1);
    const sent = server.requests("/decision")[0].body as Record<string, unknown>;
    expect(sent.bibcode).toBe(first);
    expect(sent.verdict).toBe("Relevant");
    expect(sent.expectedSeq).toBe(0);
  });

  it("sends toggled keep tags along with the verdict", async () => {
    store.enterAnnotate();
    store.toggleTagByIndex(0);
    store.toggleTagByIndex(6);
    await store.commit();
    expect(store.mode).toBe("browse");
    await store.decide("Relevant");
    const sent = server.requests("/decision")[0].body as Record<string, unknown>;
    expect(sent.tags).toEqual(["observation", "commensal"]);
    expect(store.selected.size).toBe(0);
  });

  it("refuses exclusion tags on a Relevant verdict without calling out", async () => {
    store.toggleTag("excluded-satire");
    const ok = await store.decide("Relevant");
    expect(ok).toBe(false);
    expect(store.validation).toBe("Exclusion tags only apply to Irrelevant decisions");
    expect(server.requests("/decision")).toHaveLength(0);
    expect(store.pending).toBe(4);
  });

  it("allows only one decision in flight", async () => {
    const p1 = store.decide("Relevant");
    const p2 = store.decide("Relevant");
    expect(await p2).toBe(false);
    expect(await p1).toBe(true);
    expect(server.requests("/decision")).toHaveLength(1);
  });
});

describe("irrelevant decisions", () => {
  it("blocks an unjustified Irrelevant locally and opens the justify panel", async () => {
    const ok = await store.decide("Irrelevant");
    expect(ok).toBe(false);
    expect(store.mode).toBe("justify");
    expect(store.validation).toBe("Irrelevant needs at least one exclusion tag or a note");
    expect(server.requests("/decision")).toHaveLength(0);
    expect(store.pending).toBe(4);
    expect(store.decided).toBe(0);
  });

  it("goes through once an exclusion tag is toggled", async () => {
    await store.decide("Irrelevant");
    store.toggleTagByIndex(2);
    expect(store.selected.has("excluded-pseudoscience-ufo")).toBe(true);
    await store.commit();
    expect(store.counts).toEqual({ main: 0, excluded: 1 });
    expect(store.mode).toBe("browse");
    expect(store.validation).toBeNull();
    const sent = server.requests("/decision")[0].body as Record<string, unknown>;
    expect(sent.verdict).toBe("Irrelevant");
    expect(sent.tags).toEqual(["excluded-pseudoscience-ufo"]);
  });

  it("accepts a free-text note as the justification", async () => {
    await store.decide("Irrelevant");
    store.setNote("  cites the catalog but never uses it  ");
    const ok = await store.decide("Irrelevant");
    expect(ok).toBe(true);
    const sent = server.requests("/decision")[0].body as Record<string, unknown>;
    expect(sent.note).toBe("cites the catalog but never uses it");
    expect(store.note).toBe("");
  });

  it("surfaces a server-side rejection in the validation slot", async () => {
    // pass the local check with a note, then have the server refuse anyway
    const rejecting = new FakeServer();
    const fetchFn = async (url: string, init?: RequestInit) => {
      if (url.endsWith("/decision")) {
        return new Response(JSON.stringify({ detail: "unknown tag: boop" }), {
          status: 400,
          headers: { "Content-Type": "application/json" },
        });
      }
      return rejecting.fetch(url, init);
    };
    const local = new TriageStore(new TriageApi("http://fake:1", fetchFn));
    await local.refresh();
    local.setNote("x");
    const ok = await local.decide("Irrelevant");
    expect(ok).toBe(false);
    expect(local.validation).toBe("unknown tag: boop");
    expect(local.pending).toBe(4);
  });
});

describe("skip", () => {
  it("moves the cursor without shrinking the queue", async () => {
    const order = store.cards.map((c) => c.bibcode);
    const ok = await store.decide("Skipped");
    expect(ok).toBe(true);
    expect(store.pending).toBe(4);
    expect(store.converged).toBe(false);
    expect(store.cards.map((c) => c.bibcode)).toEqual(order);
    expect(store.current()?.bibcode).toBe(order[1]);
    expect(store.decided).toBe(1);
    expect(store.seq).toBe(1);
  });

  it("wraps back to the head after skipping the tail card", async () => {
    for (let i = 0; i < store.cards.length; i += 1) {
      await store.decide("Skipped");
    }
    expect(store.current()?.bibcode).toBe(store.cards[0].bibcode);
    expect(store.pending).toBe(4);
  });
});

describe("conflicts", () => {
  it("rolls back and resyncs on a stale-seq conflict", async () => {
    server.decideExternal(FAKE_CARDS[1].bibcode, "Relevant");
    const ok = await store.decide("Relevant");
    expect(ok).toBe(false);
    expect(store.banner).toBe("Queue refreshed: another session decided first");
    // after the resync the local queue mirrors the external decision
    expect(store.cards.map((c) => c.bibcode)).toEqual(server.queue());
    expect(store.pending).toBe(3);
    expect(store.counts).toEqual({ main: 1, excluded: 0 });
    expect(store.seq).toBe(1);
    expect(store.undoDepth()).toBe(0);
  });
});

describe("undo", () => {
  it("restores the record at its original queue position", async () => {
    const original = store.cards.map((c) => c.bibcode);
    await store.decide("Relevant");
    const ok = await store.undoLast();
    expect(ok).toBe(true);
    expect(store.cards.map((c) => c.bibcode)).toEqual(original);
    expect(store.pending).toBe(4);
    expect(store.counts).toEqual({ main: 0, excluded: 0 });
    expect(store.banner).toBe(`Undid Relevant for ${original[0]}`);
    expect(store.undoDepth()).toBe(0);
    const sent = server.requests("/undo")[0].body as Record<string, unknown>;
    expect(sent.bibcode).toBe(original[0]);
  });

  it("reports when this session has nothing to undo", async () => {
    const ok = await store.undoLast();
    expect(ok).toBe(false);
    expect(store.banner).toBe("Nothing to undo in this session");
    expect(server.requests("/undo")).toHaveLength(0);
  });

  it("drops a stack entry the server no longer recognizes", async () => {
    await store.decide("Relevant");
    server.decisions.clear();
    const ok = await store.undoLast();
    expect(ok).toBe(false);
    expect(store.undoDepth()).toBe(0);
    expect(store.banner).toContain("nothing to undo");
  });
});

describe("offline decisions", () => {
  it("rolls the optimistic advance back and disables itself", async () => {
    server.offline = true;
    const before = store.cards.map((c) => c.bibcode);
    const ok = await store.decide("Relevant");
    expect(ok).toBe(false);
    expect(store.online).toBe(false);
    expect(store.banner).toBe("Offline: decision not recorded");
    expect(store.cards.map((c) => c.bibcode)).toEqual(before);
    expect(store.pending).toBe(4);
    expect(store.decided).toBe(0);
    // while offline further decisions refuse immediately, before fetch
    const again = await store.decide("Relevant");
    expect(again).toBe(false);
    expect(store.banner).toBe("Offline: decision keys are disabled");
    expect(server.requests("/decision")).toHaveLength(0);
  });
});

describe("digest", () => {
  it("loads a digest as text", async () => {
    await store.loadDigest("2021-01");
    expect(store.digestText).toContain("# Digest 2021-01");
    expect(store.digestError).toBeNull();
  });

  it("shows the server complaint for a malformed month", async () => {
    await store.loadDigest("january");
    expect(store.digestText).toBeNull();
    expect(store.digestError).toContain("month must be YYYY-MM");
  });
});
