/**
 * Wire types and a small fetch client for the review API.
 *
 * The console never talks to the store directly: everything it shows and
 * every decision it records goes through these endpoints.
 */

export type ItemKind = "NewKnowledge" | "PossiblyObsoleteAnswer";
export type ItemStatus = "Pending" | "Approved" | "Rejected" | "Edited";
export type EntryStatus = "Active" | "Obsolete";
export type RunState = "running" | "completed" | "failed";

export interface ReviewItem {
  item_id: string;
  company_id: string;
  kind: ItemKind;
  status: ItemStatus;
  question: string;
  answer: string;
  type: string;
  explanation: string;
  cluster_id: string;
  related_entry_id: string | null;
  source_transcript_ids: string[];
  created_at: string;
  decided_by: string | null;
  decided_at: string | null;
  note: string;
  content_hash: string;
}

/** A decided item additionally reports the entry it minted, if any. */
export interface DecidedItem extends ReviewItem {
  kb_entry_id: string | null;
}

export interface ReviewItemPage {
  items: ReviewItem[];
  page: number;
  page_size: number;
  total: number;
}

export interface KnowledgeEntry {
  entry_id: string;
  company_id: string;
  question: string;
  answer: string;
  status: EntryStatus;
  provenance_cluster_id: string;
  source_transcript_ids: string[];
  created_at: string;
  updated_at: string;
}

export interface EntryPage {
  entries: KnowledgeEntry[];
  page: number;
  page_size: number;
  total: number;
}

export interface ClusterMember {
  pair_id: string;
  question: string;
  answer: string;
  source_transcript_id: string;
}

export interface ClusterRepresentative {
  question: string;
  answer: string;
  type: string;
  explanation: string;
}

export interface ClusterDetail {
  cluster_id: string;
  run_id: string;
  is_noise_singleton: boolean;
  members: ClusterMember[];
  representatives: ClusterRepresentative[];
}

export interface StageFailure {
  stage: string;
  subject_id: string;
  error: string;
}

export interface RunManifest {
  run_id: string;
  company_id: string;
  window_from: string | null;
  window_to: string | null;
  transcripts_processed: number;
  pairs_extracted: number;
  clusters_formed: number;
  noise_singletons: number;
  representatives_recommended: number;
  representatives_deduped: number;
  ingest: Record<string, number>;
  failures: StageFailure[];
  silhouette: number | null;
}

export interface RunStatus {
  run_id: string;
  status: RunState;
  manifest?: RunManifest;
  error?: string;
}

export type QueueQuery = {
  status?: ItemStatus;
  company?: string;
  page?: number;
  page_size?: number;
};

export type EntryQuery = {
  company: string;
  status?: EntryStatus;
  q?: string;
  page?: number;
  page_size?: number;
};

export interface DecisionRequest {
  decision: "approve" | "reject" | "edit";
  new_question?: string;
  new_answer?: string;
}

export interface RunRequest {
  company?: string;
  from?: string;
  to?: string;
}

/** Error carrying the HTTP status; status 0 means the request never completed. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

function buildQuery(params: Record<string, string | number | undefined>): string {
  const qs = new URLSearchParams();
  for (const [key, value] of Object.entries(params)) {
    if (value !== undefined) {
      qs.set(key, String(value));
    }
  }
  const text = qs.toString();
  return text ? `?${text}` : "";
}

export class ReviewApiClient {
  private readonly baseUrl: string;
  private readonly token: string;

  constructor(baseUrl: string, token: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.token = token;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await fetch(`${this.baseUrl}${path}`, {
        method,
        headers: {
          Authorization: `Bearer ${this.token}`,
          ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
        },
        body: body !== undefined ? JSON.stringify(body) : undefined,
      });
    } catch (err) {
      throw new ApiError(0, `network failure: ${(err as Error).message}`);
    }
    if (!response.ok) {
      let detail = `${response.status} ${response.statusText}`;
      try {
        const parsed = (await response.json()) as { detail?: unknown };
        if (parsed && parsed.detail !== undefined) {
          detail = typeof parsed.detail === "string" ? parsed.detail : JSON.stringify(parsed.detail);
        }
      } catch {
        // non-JSON error body: keep the status line
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  listReviewItems(params: QueueQuery = {}): Promise<ReviewItemPage> {
    return this.request("GET", `/api/review-items${buildQuery(params)}`);
  }

  postDecision(itemId: string, body: DecisionRequest): Promise<DecidedItem> {
    return this.request("POST", `/api/review-items/${encodeURIComponent(itemId)}/decision`, body);
  }

  listEntries(params: EntryQuery): Promise<EntryPage> {
    return this.request("GET", `/api/kb/entries${buildQuery(params)}`);
  }

  getCluster(clusterId: string, run?: string): Promise<ClusterDetail> {
    return this.request("GET", `/api/clusters/${encodeURIComponent(clusterId)}${buildQuery({ run })}`);
  }

  triggerRun(body: RunRequest): Promise<{ run_id: string; status: RunState }> {
    return this.request("POST", "/api/runs", body);
  }

  getRun(runId: string): Promise<RunStatus> {
    return this.request("GET", `/api/runs/${encodeURIComponent(runId)}`);
  }
}

/** The slice of the client the view state actually uses (handy for fakes). */
export type ReviewApi = Pick<
  ReviewApiClient,
  "listReviewItems" | "postDecision" | "listEntries" | "getCluster" | "triggerRun" | "getRun"
>;
