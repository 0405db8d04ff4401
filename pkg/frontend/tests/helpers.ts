import { FetchLike } from "../src/api.js";

export interface RecordedCall {
  url: string;
  method: string;
  headers: Record<string, string>;
  body: unknown;
}

/** A fetch stub that records every call and replays queued responses. */
export function makeFetchStub(): {
  fetchFn: FetchLike;
  calls: RecordedCall[];
  respondWith: (status: number, payload: unknown) => void;
} {
  const calls: RecordedCall[] = [];
  const queue: Array<{ status: number; payload: unknown }> = [];
  const fetchFn: FetchLike = async (url, init) => {
    calls.push({
      url,
      method: init?.method ?? "GET",
      headers: (init?.headers as Record<string, string>) ?? {},
      body: init?.body ? JSON.parse(init.body as string) : undefined,
    });
    const next = queue.shift() ?? { status: 200, payload: {} };
    return new Response(JSON.stringify(next.payload), {
      status: next.status,
      headers: { "Content-Type": "application/json" },
    });
  };
  return {
    fetchFn,
    calls,
    respondWith: (status, payload) => queue.push({ status, payload }),
  };
}
