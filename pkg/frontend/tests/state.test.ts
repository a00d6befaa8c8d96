import { describe, expect, it } from "vitest";

import { ApiError, type DecidedItem, type ReviewApi, type ReviewItem } from "../src/api";
import { ConsoleState, validateWindow } from "../src/state";

function makeItem(id: string, overrides: Partial<ReviewItem> = {}): ReviewItem {
  return {
    item_id: id,
    company_id: "acme",
    kind: "NewKnowledge",
    status: "Pending",
    question: `Question ${id}?`,
    answer: `Answer ${id}.`,
    type: "Extracted",
    explanation: "N/A",
    cluster_id: `c-${id}`,
    related_entry_id: null,
    source_transcript_ids: ["t1"],
    created_at: "2026-01-01T00:00:00Z",
    decided_by: null,
    decided_at: null,
    note: "",
    content_hash: id,
    ...overrides,
  };
}

function decided(item: ReviewItem, kbEntryId: string | null): DecidedItem {
  return { ...item, status: "Approved", decided_by: "rev", kb_entry_id: kbEntryId };
}

/** A client that fails loudly unless a method is overridden. */
function makeFake(overrides: Partial<ReviewApi>): ReviewApi {
  const unexpected = (name: string) => async () => {
    throw new Error(`unexpected call to ${name}`);
  };
  return {
    listReviewItems: unexpected("listReviewItems"),
    postDecision: unexpected("postDecision"),
    listEntries: unexpected("listEntries"),
    getCluster: unexpected("getCluster"),
    triggerRun: unexpected("triggerRun"),
    getRun: unexpected("getRun"),
    ...overrides,
  } as ReviewApi;
}

describe("queue refresh", () => {
  it("mirrors the page the API returned", async () => {
    const items = [makeItem("a"), makeItem("b")];
    const state = new ConsoleState(
      makeFake({
        listReviewItems: async (params) => {
          expect(params?.status).toBe("Pending");
          return { items, page: 1, page_size: 200, total: 2 };
        },
      }),
    );
    await state.refreshQueue();
    expect(state.items).toEqual(items);
    expect(state.total).toBe(2);
    expect(state.banner).toBeNull();
  });

  it("keeps the stale list and raises the banner on failure, clears it on retry", async () => {
    let fail = true;
    const state = new ConsoleState(
      makeFake({
        listReviewItems: async () => {
          if (fail) {
            throw new ApiError(503, "backend restarting");
          }
          return { items: [makeItem("a")], page: 1, page_size: 200, total: 1 };
        },
      }),
    );
    await state.refreshQueue();
    expect(state.banner).toContain("503");
    expect(state.banner).toContain("backend restarting");
    expect(state.items).toEqual([]);

    fail = false;
    await state.refreshQueue();
    expect(state.banner).toBeNull();
    expect(state.total).toBe(1);
  });
});

describe("selection and drafts", () => {
  it("pulls the cluster for the selected item", async () => {
    const item = makeItem("a");
    const state = new ConsoleState(
      makeFake({
        getCluster: async (clusterId) => {
          expect(clusterId).toBe("c-a");
          return {
            cluster_id: clusterId,
            run_id: "run-x",
            is_noise_singleton: false,
            members: [],
            representatives: [],
          };
        },
      }),
    );
    await state.select(item);
    expect(state.selected).toBe(item);
    expect(state.cluster?.cluster_id).toBe("c-a");
  });

  it("only items still pending get an edit draft", () => {
    const state = new ConsoleState(makeFake({}));
    expect(state.beginEdit()).toBeNull();

    state.selected = makeItem("a", { status: "Approved" });
    expect(state.beginEdit()).toBeNull();
    expect(state.draft).toBeNull();

    state.selected = makeItem("b");
    const draft = state.beginEdit();
    expect(draft).toEqual({ question: "Question b?", answer: "Answer b." });
    expect(state.draft).toBe(draft);
  });
});

describe("decisions", () => {
  it("removes the item optimistically and counts the minted entry", async () => {
    const item = makeItem("a");
    const state = new ConsoleState(
      makeFake({ postDecision: async () => decided(item, "e000001") }),
    );
    state.items = [item, makeItem("b")];
    state.total = 2;
    state.kbTotal = 4;

    const outcome = await state.decide(item, { decision: "approve" });
    expect(outcome).toBe("applied");
    expect(state.items.map((i) => i.item_id)).toEqual(["b"]);
    expect(state.total).toBe(1);
    expect(state.kbTotal).toBe(5);
  });

  it("a rejection mints nothing and the count stays put", async () => {
    const item = makeItem("a");
    const state = new ConsoleState(
      makeFake({ postDecision: async () => ({ ...decided(item, null), status: "Rejected" as const }) }),
    );
    state.items = [item];
    state.total = 1;
    state.kbTotal = 4;

    expect(await state.decide(item, { decision: "reject" })).toBe("applied");
    expect(state.kbTotal).toBe(4);
  });

  it("on conflict it refreshes from the server instead of restoring its copy", async () => {
    const mine = makeItem("a");
    const serverTruth = [makeItem("b"), makeItem("c")];
    const state = new ConsoleState(
      makeFake({
        postDecision: async () => {
          throw new ApiError(409, "item ri-a already decided");
        },
        listReviewItems: async () => ({ items: serverTruth, page: 1, page_size: 200, total: 2 }),
      }),
    );
    state.items = [mine, ...serverTruth];
    state.total = 3;

    const outcome = await state.decide(mine, { decision: "approve" });
    expect(outcome).toBe("conflict");
    expect(state.items).toEqual(serverTruth);
    expect(state.total).toBe(2);
  });

  it("restores the item in place when the POST fails outright", async () => {
    const items = [makeItem("a"), makeItem("b"), makeItem("c")];
    const middle = items[1]!;
    const state = new ConsoleState(
      makeFake({
        postDecision: async () => {
          throw new ApiError(0, "network failure: connection refused");
        },
      }),
    );
    state.items = [...items];
    state.total = 3;

    const outcome = await state.decide(middle, { decision: "approve" });
    expect(outcome).toBe("failed");
    expect(state.items.map((i) => i.item_id)).toEqual(["a", "b", "c"]);
    expect(state.total).toBe(3);
    expect(state.banner).toContain("connection refused");
  });

  it("a double-click sends exactly one POST", async () => {
    const item = makeItem("a");
    let calls = 0;
    let release!: (value: DecidedItem) => void;
    const gate = new Promise<DecidedItem>((resolve) => {
      release = resolve;
    });
    const state = new ConsoleState(
      makeFake({
        postDecision: () => {
          calls += 1;
          return gate;
        },
      }),
    );
    state.items = [item];
    state.total = 1;

    const first = state.decide(item, { decision: "approve" });
    expect(state.isDeciding(item.item_id)).toBe(true);
    const second = await state.decide(item, { decision: "approve" });
    expect(second).toBe("in-flight");

    release(decided(item, "e000001"));
    expect(await first).toBe("applied");
    expect(calls).toBe(1);
    expect(state.isDeciding(item.item_id)).toBe(false);
  });
});

describe("window validation", () => {
  it("accepts empty and ordered windows", () => {
    expect(validateWindow("", "")).toBeNull();
    expect(validateWindow("2026-01-01T00:00:00Z", "")).toBeNull();
    expect(validateWindow("2026-01-01T00:00:00Z", "2026-02-01T00:00:00Z")).toBeNull();
  });

  it("rejects garbage and inverted windows", () => {
    expect(validateWindow("last tuesday-ish", "")).toContain("not a valid timestamp");
    expect(validateWindow("", "whenever")).toContain("not a valid timestamp");
    expect(validateWindow("2026-02-01T00:00:00Z", "2026-01-01T00:00:00Z")).toBe(`"from" is after "to"`);
  });
});

describe("run triggering", () => {
  it("an inverted window never reaches the API", async () => {
    const state = new ConsoleState(
      makeFake({
        triggerRun: async () => {
          throw new Error("the request should not have been sent");
        },
      }),
    );
    state.windowFrom = "2026-02-01T00:00:00Z";
    state.windowTo = "2026-01-01T00:00:00Z";

    const runId = await state.triggerRun("acme");
    expect(runId).toBeNull();
    expect(state.runError).toBe(`"from" is after "to"`);
    expect(state.run).toBeNull();
  });

  it("renders a server conflict inline", async () => {
    const state = new ConsoleState(
      makeFake({
        triggerRun: async () => {
          throw new ApiError(409, "RunInFlight: identical run already running");
        },
      }),
    );
    const runId = await state.triggerRun("acme");
    expect(runId).toBeNull();
    expect(state.runError).toContain("RunInFlight");
  });

  it("polls until the run leaves the running state", async () => {
    const statuses = [
      { run_id: "run-z", status: "running" as const },
      { run_id: "run-z", status: "running" as const },
      { run_id: "run-z", status: "completed" as const },
    ];
    let polls = 0;
    const state = new ConsoleState(
      makeFake({
        triggerRun: async () => ({ run_id: "run-z", status: "running" as const }),
        getRun: async () => statuses[Math.min(polls++, 2)]!,
      }),
    );
    const runId = await state.triggerRun("acme");
    expect(runId).toBe("run-z");
    expect(state.run?.status).toBe("running");

    const final = await state.pollRun("run-z", { intervalMs: 1 });
    expect(final.status).toBe("completed");
    expect(state.run).toBe(final);
    expect(polls).toBe(3);
  });
});
