export interface SearchResult {
  id: string;
  distance: number;
  metadata: Record<string, string>;
}

export interface SearchResponse {
  results: SearchResult[];
  embedder: { name: string; dimension: number; version: number };
}

export interface VisualizeResponse {
  points: [number, number][];
  ids: string[];
  seed: number;
}

export interface TaskRow {
  task_id: string;
  kind: "contract" | "nft";
  status: "pending" | "processing" | "done" | "failed";
  attempts: number;
  last_error: string | null;
  payload: Record<string, unknown>;
}

export interface TasksPage {
  tasks: TaskRow[];
  next_cursor: number | null;
}

export interface Analytics {
  contracts: number;
  nfts: Record<string, number>;
  tasks: Record<string, number>;
  vectors: number;
  workers: {
    processed: number;
    succeeded: number;
    failed: number;
    per_kind: Record<string, number>;
    throughput: number;
  };
}
