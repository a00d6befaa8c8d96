import { describe, expect, it } from "vitest";

import type { ClusterDetail, ReviewItem, RunStatus } from "../src/api";
import {
  escapeHtml,
  renderBanner,
  renderClusterPanel,
  renderItemDetail,
  renderKbEntries,
  renderQueue,
  renderRunPanel,
} from "../src/render";

let seq = 0;

function makeItem(overrides: Partial<ReviewItem> = {}): ReviewItem {
  seq += 1;
  return {
    item_id: `ri${String(seq).padStart(6, "0")}`,
    company_id: "acme",
    kind: "NewKnowledge",
    status: "Pending",
    question: "How do I reset my password?",
    answer: "Use the reset link on the sign-in page.",
    type: "Extracted",
    explanation: "N/A",
    cluster_id: "c0001",
    related_entry_id: null,
    source_transcript_ids: ["t1", "t2"],
    created_at: "2026-01-01T00:00:00Z",
    decided_by: null,
    decided_at: null,
    note: "",
    content_hash: "abc123",
    ...overrides,
  };
}

describe("renderQueue", () => {
  it("shows an explicit empty state instead of a blank list", () => {
    const html = renderQueue([]);
    expect(html).toContain("empty-state");
    expect(html).not.toContain("<ul");
  });

  it("renders one row per item with a kind badge each", () => {
    const items = [
      makeItem(),
      makeItem({ kind: "PossiblyObsoleteAnswer" }),
      makeItem(),
    ];
    const html = renderQueue(items);
    expect(html.match(/queue-row/g)).toHaveLength(3);
    for (const item of items) {
      expect(html).toContain(`data-item-id="${item.item_id}"`);
    }
    expect(html.match(/badge-new/g)).toHaveLength(2);
    expect(html.match(/badge-obsolete/g)).toHaveLength(1);
    expect(html).toContain(">NewKnowledge<");
    expect(html).toContain(">PossiblyObsoleteAnswer<");
  });

  it("disables the decision buttons only for the item in flight", () => {
    const items = [makeItem(), makeItem()];
    const first = items[0]!;
    const html = renderQueue(items, first.item_id);
    const rows = html.split("queue-row").slice(1);
    expect(rows[0]).toContain("disabled");
    expect(rows[1]).not.toContain("disabled");
  });

  it("escapes markup smuggled into questions", () => {
    const html = renderQueue([makeItem({ question: `<script>alert("x")</script>` })]);
    expect(html).not.toContain("<script>");
    expect(html).toContain("&lt;script&gt;");
  });
});

describe("renderItemDetail", () => {
  it("shows old and new answers side by side for a possibly obsolete answer", () => {
    const item = makeItem({
      kind: "PossiblyObsoleteAnswer",
      answer: "Returns now take 60 days.",
      related_entry_id: "e000001",
    });
    const html = renderItemDetail(item, "Returns take 30 days.");
    expect(html).toContain("compare-current");
    expect(html).toContain("compare-proposed");
    expect(html).toContain("Returns take 30 days.");
    expect(html).toContain("Returns now take 60 days.");
  });

  it("renders a single proposed card for new knowledge", () => {
    const html = renderItemDetail(makeItem());
    expect(html).toContain("detail-new");
    expect(html).not.toContain("compare-col");
  });
});

describe("renderClusterPanel", () => {
  it("lists every member pair with its source transcript", () => {
    const cluster: ClusterDetail = {
      cluster_id: "c0003",
      run_id: "run-abcdef123456",
      is_noise_singleton: false,
      members: [
        { pair_id: "p1", question: "Q one?", answer: "A one.", source_transcript_id: "t9" },
        { pair_id: "p2", question: "Q two?", answer: "A two.", source_transcript_id: "t4" },
      ],
      representatives: [{ question: "Q one?", answer: "A one.", type: "Extracted", explanation: "N/A" }],
    };
    const html = renderClusterPanel(cluster);
    expect(html).toContain("c0003");
    expect(html).toContain("2 member(s)");
    expect(html).toContain("Q two?");
    expect(html).toContain("t4");
    expect(html).not.toContain("noise singleton");
    expect(renderClusterPanel(null)).toBe("");
  });

  it("marks noise singletons", () => {
    const html = renderClusterPanel({
      cluster_id: "n0001",
      run_id: "run-abcdef123456",
      is_noise_singleton: true,
      members: [{ pair_id: "p1", question: "Q?", answer: "A.", source_transcript_id: "t1" }],
      representatives: [],
    });
    expect(html).toContain("noise singleton");
  });
});

describe("renderRunPanel", () => {
  const completed: RunStatus = {
    run_id: "run-9540c9ac7f3c",
    status: "completed",
    manifest: {
      run_id: "run-9540c9ac7f3c",
      company_id: "acme",
      window_from: null,
      window_to: null,
      transcripts_processed: 6,
      pairs_extracted: 20,
      clusters_formed: 14,
      noise_singletons: 10,
      representatives_recommended: 14,
      representatives_deduped: 0,
      ingest: { inserted: 0, review_new: 5 },
      failures: [],
      silhouette: 0.41,
    },
  };

  it("shows per-stage counts once a run completes", () => {
    const html = renderRunPanel(completed, null);
    expect(html).toContain("run-9540c9ac7f3c: completed");
    expect(html).toContain("transcripts processed");
    expect(html).toContain(`<td class="count">6</td>`);
    expect(html).toContain(`<td class="count">20</td>`);
    expect(html).toContain(`<td class="count">14</td>`);
    expect(html).not.toContain("stage failure");
  });

  it("keeps the inline validation message next to the trigger form", () => {
    const html = renderRunPanel(null, `"from" is after "to"`);
    expect(html).toContain("run-error");
    expect(html).toContain("&quot;from&quot; is after &quot;to&quot;");
    expect(html).toContain("No run triggered.");
  });

  it("surfaces a failed run's error", () => {
    const html = renderRunPanel({ run_id: "run-x", status: "failed", error: "provider down" }, null);
    expect(html).toContain("run-x: failed");
    expect(html).toContain("provider down");
  });

  it("renders a bare status line while the run is still going", () => {
    const html = renderRunPanel({ run_id: "run-y", status: "running" }, null);
    expect(html).toContain("run-y: running");
    expect(html).not.toContain("stage-counts");
  });
});

describe("banner and misc", () => {
  it("renders a retryable banner only when there is a message", () => {
    expect(renderBanner(null)).toBe("");
    const html = renderBanner("API error 503: corpus unreadable");
    expect(html).toContain("banner-error");
    expect(html).toContain(`data-action="retry"`);
    expect(html).toContain("corpus unreadable");
  });

  it("escapes all five HTML special characters", () => {
    expect(escapeHtml(`<a href="x">&'</a>`)).toBe("&lt;a href=&quot;x&quot;&gt;&amp;&#39;&lt;/a&gt;");
  });

  it("renders KB entries with question and answer text", () => {
    const html = renderKbEntries([
      {
        entry_id: "e000001",
        company_id: "acme",
        question: "Edited question?",
        answer: "Edited answer.",
        status: "Active",
        provenance_cluster_id: "c0001",
        source_transcript_ids: ["t1"],
        created_at: "2026-01-01T00:00:00Z",
        updated_at: "2026-01-01T00:00:00Z",
      },
    ]);
    expect(html).toContain("Edited question?");
    expect(html).toContain("Edited answer.");
    expect(renderKbEntries([])).toContain("empty-state");
  });
});
