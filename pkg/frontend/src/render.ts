/**
 * Render-to-string views.  Pure functions of the data they are handed, so
 * they can be tested without a DOM; event wiring happens in main.ts via
 * data-action attributes.
 */

import type { ClusterDetail, KnowledgeEntry, ReviewItem, RunStatus } from "./api";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

/** Retryable error banner; empty string when there is nothing to report. */
export function renderBanner(message: string | null): string {
  if (!message) {
    return "";
  }
  return (
    `<div class="banner banner-error" role="alert">` +
    `<span class="banner-text">${escapeHtml(message)}</span>` +
    `<button type="button" data-action="retry">Retry</button>` +
    `</div>`
  );
}

function decisionButton(action: string, itemId: string, label: string, disabled: boolean): string {
  const attr = disabled ? " disabled" : "";
  return `<button type="button" data-action="${action}" data-item-id="${escapeHtml(itemId)}"${attr}>${label}</button>`;
}

export function renderQueueRow(item: ReviewItem, deciding = false): string {
  const badgeClass = item.kind === "NewKnowledge" ? "badge-new" : "badge-obsolete";
  return (
    `<li class="queue-row" data-item-id="${escapeHtml(item.item_id)}">` +
    `<span class="badge ${badgeClass}">${item.kind}</span>` +
    `<span class="company">${escapeHtml(item.company_id)}</span>` +
    `<span class="question">${escapeHtml(item.question)}</span>` +
    decisionButton("approve", item.item_id, "Approve", deciding) +
    decisionButton("reject", item.item_id, "Reject", deciding) +
    decisionButton("edit", item.item_id, "Edit", deciding) +
    `</li>`
  );
}

/**
 * The review queue.  Mirrors whatever page the API returned; an empty page
 * gets an explicit empty-state panel rather than a blank list.
 */
export function renderQueue(items: ReviewItem[], decidingId: string | null = null): string {
  if (items.length === 0) {
    return `<div class="empty-state">No review items match the current filter.</div>`;
  }
  const rows = items.map((item) => renderQueueRow(item, item.item_id === decidingId));
  return `<ul class="queue">\n${rows.join("\n")}\n</ul>`;
}

/**
 * Detail pane for the selected item.  A possibly-obsolete answer is shown
 * side by side with the entry text it would replace; new knowledge gets a
 * single proposed card.
 */
export function renderItemDetail(item: ReviewItem, currentAnswer: string | null = null): string {
  const heading = `<h3 class="detail-question">${escapeHtml(item.question)}</h3>`;
  if (item.kind === "PossiblyObsoleteAnswer") {
    const current = currentAnswer === null ? "(entry unavailable)" : currentAnswer;
    return (
      `<div class="detail detail-obsolete">${heading}` +
      `<div class="compare">` +
      `<section class="compare-col compare-current"><h4>Current answer</h4>` +
      `<p>${escapeHtml(current)}</p></section>` +
      `<section class="compare-col compare-proposed"><h4>Proposed answer</h4>` +
      `<p>${escapeHtml(item.answer)}</p></section>` +
      `</div>` +
      `<p class="explanation">${escapeHtml(item.explanation)}</p>` +
      `</div>`
    );
  }
  return (
    `<div class="detail detail-new">${heading}` +
    `<p class="answer">${escapeHtml(item.answer)}</p>` +
    `<p class="explanation">${escapeHtml(item.explanation)}</p>` +
    `</div>`
  );
}

/** Cluster drill-down: every member pair behind the recommendation. */
export function renderClusterPanel(cluster: ClusterDetail | null): string {
  if (!cluster) {
    return "";
  }
  const members = cluster.members
    .map(
      (m) =>
        `<li class="member"><span class="member-question">${escapeHtml(m.question)}</span>` +
        `<span class="member-source">${escapeHtml(m.source_transcript_id)}</span></li>`,
    )
    .join("\n");
  const noise = cluster.is_noise_singleton ? " (noise singleton)" : "";
  return (
    `<div class="cluster-panel">` +
    `<h4>${escapeHtml(cluster.cluster_id)}${noise} &mdash; ${cluster.members.length} member(s)</h4>` +
    `<ol class="members">\n${members}\n</ol>` +
    `</div>`
  );
}

/** KB browser rows for the selected company. */
export function renderKbEntries(entries: KnowledgeEntry[]): string {
  if (entries.length === 0) {
    return `<div class="empty-state">No knowledge entries yet.</div>`;
  }
  const rows = entries
    .map(
      (e) =>
        `<li class="kb-entry" data-entry-id="${escapeHtml(e.entry_id)}">` +
        `<span class="kb-status">${e.status}</span>` +
        `<span class="kb-question">${escapeHtml(e.question)}</span>` +
        `<span class="kb-answer">${escapeHtml(e.answer)}</span>` +
        `</li>`,
    )
    .join("\n");
  return `<ul class="kb-entries">\n${rows}\n</ul>`;
}

const STAGE_COUNT_LABELS: Array<[string, (m: NonNullable<RunStatus["manifest"]>) => number]> = [
  ["transcripts processed", (m) => m.transcripts_processed],
  ["pairs extracted", (m) => m.pairs_extracted],
  ["clusters formed", (m) => m.clusters_formed],
  ["noise singletons", (m) => m.noise_singletons],
  ["representatives recommended", (m) => m.representatives_recommended],
  ["removed as duplicates", (m) => m.representatives_deduped],
];

/**
 * Run trigger panel: inline validation/conflict message plus the state of
 * the last run, with per-stage counts once the manifest is in.
 */
export function renderRunPanel(run: RunStatus | null, inlineError: string | null): string {
  const error = inlineError ? `<p class="run-error">${escapeHtml(inlineError)}</p>` : "";
  if (!run) {
    return `<div class="run-panel">${error}<p class="run-status">No run triggered.</p></div>`;
  }
  const head = `<p class="run-status">Run ${escapeHtml(run.run_id)}: ${run.status}</p>`;
  if (run.status === "completed" && run.manifest) {
    const m = run.manifest;
    const rows = STAGE_COUNT_LABELS.map(
      ([label, pick]) => `<tr><td>${label}</td><td class="count">${pick(m)}</td></tr>`,
    ).join("");
    const failures =
      m.failures.length > 0
        ? `<p class="run-failures">${m.failures.length} stage failure(s) isolated</p>`
        : "";
    return `<div class="run-panel">${error}${head}<table class="stage-counts">${rows}</table>${failures}</div>`;
  }
  if (run.status === "failed") {
    return `<div class="run-panel">${error}${head}<p class="run-failure">${escapeHtml(run.error ?? "unknown failure")}</p></div>`;
  }
  return `<div class="run-panel">${error}${head}</div>`;
}
