import { Session } from "./session.js";
import {
  Analytics,
  SearchResponse,
  TasksPage,
  VisualizeResponse,
} from "./types.js";

export type FetchLike = (
  input: string,
  init?: RequestInit
) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

/**
 * Thin client over the documented HTTP routes. Every displayed number comes
 * verbatim from these responses; nothing is recomputed client-side.
 */
export class ApiClient {
  constructor(
    private baseUrl: string,
    private session: Session,
    private fetchFn: FetchLike = (input, init) => fetch(input, init)
  ) {}

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
    authed = false
  ): Promise<T> {
    const headers: Record<string, string> = authed
      ? { ...this.session.authHeader() }
      : {};
    if (body !== undefined) headers["Content-Type"] = "application/json";
    const resp = await this.fetchFn(this.baseUrl + path, {
      method,
      headers,
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    if (resp.status === 401 && authed) {
      this.session.expire();
    }
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const payload = await resp.json();
        if (payload && payload.detail) detail = String(payload.detail);
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  async login(username: string, password: string): Promise<void> {
    const { token } = await this.request<{ token: string }>(
      "POST",
      "/auth/login",
      { username, password }
    );
    this.session.setToken(token);
  }

  search(imageBase64: string, topK = 10): Promise<SearchResponse> {
    return this.request("POST", "/search", {
      image_base64: imageBase64,
      top_k: topK,
      namespace: this.session.namespace,
    });
  }

  visualize(vectorIds: string[], seed: number): Promise<VisualizeResponse> {
    return this.request("POST", "/visualize", {
      vector_ids: vectorIds,
      namespace: this.session.namespace,
      seed,
    });
  }

  enqueue(address: string, chain = "ethereum"): Promise<{ task_id: string }> {
    return this.request("POST", "/admin/enqueue", { chain, address }, true);
  }

  tasks(status?: string, cursor = 0, limit = 50): Promise<TasksPage> {
    const params = new URLSearchParams({
      cursor: String(cursor),
      limit: String(limit),
    });
    if (status) params.set("status", status);
    return this.request("GET", `/admin/tasks?${params}`, undefined, true);
  }

  retry(taskId: string): Promise<{ task_id: string; status: string }> {
    return this.request(
      "POST",
      `/admin/tasks/${taskId}/retry`,
      undefined,
      true
    );
  }

  analytics(): Promise<Analytics> {
    return this.request("GET", "/admin/analytics", undefined, true);
  }
}
