/**
 * Debounced completion client with stale-response protection.
 *
 * Keystrokes arrive faster than the service should be hit, so requests are
 * trailing-edge debounced. Every request that actually fires gets a
 * monotonically increasing id; a response is delivered only while its id is
 * still the newest, and the previous in-flight fetch is aborted first, so at
 * most one request is ever outstanding and an old answer can never paint
 * over a new one.
 */

export interface Suggestion {
  name: string;
  prob: number;
}

export interface CompleteResponse {
  suggestions: Suggestion[];
  model: string;
  latencyMs: number;
}

export interface CompleteRequest {
  context: string;
  receiver: string;
  candidates: string[];
  top_k?: number;
}

export interface HealthInfo {
  status: string;
  model: string;
  param_count: number;
  size_bytes: number;
}

type FetchLike = typeof fetch;

export class CompletionClient {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private lastIssued = 0;
  private inflight: AbortController | null = null;

  constructor(
    private readonly baseUrl: string,
    private readonly debounceMs = 150,
    private readonly fetchFn: FetchLike = fetch,
  ) {}

  /** Schedule a completion request; earlier pending ones are superseded. */
  request(
    body: CompleteRequest,
    onResult: (r: CompleteResponse) => void,
    onError: (err: Error) => void,
  ): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.fire(body, onResult, onError);
    }, this.debounceMs);
  }

  /** Drop any scheduled request (e.g. the trigger was typed over). */
  cancel(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = null;
    this.lastIssued += 1; // orphan whatever is in flight
    this.inflight?.abort();
    this.inflight = null;
  }

  private async fire(
    body: CompleteRequest,
    onResult: (r: CompleteResponse) => void,
    onError: (err: Error) => void,
  ): Promise<void> {
    const id = ++this.lastIssued;
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    try {
      const resp = await this.fetchFn(`${this.baseUrl}/complete`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
        signal: controller.signal,
      });
      if (id !== this.lastIssued) return; // superseded while in flight
      if (!resp.ok) {
        onError(new Error(`service answered ${resp.status}`));
        return;
      }
      const data = (await resp.json()) as {
        suggestions: [string, number][]; model: string; latency_ms: number;
      };
      if (id !== this.lastIssued) return;
      onResult({
        suggestions: data.suggestions.map(([name, prob]) => ({ name, prob })),
        model: data.model,
        latencyMs: data.latency_ms,
      });
    } catch (err) {
      if (id !== this.lastIssued) return; // aborted by a newer request
      onError(err instanceof Error ? err : new Error(String(err)));
    }
  }

  async health(): Promise<HealthInfo> {
    const resp = await this.fetchFn(`${this.baseUrl}/health`);
    if (!resp.ok) throw new Error(`health check failed: ${resp.status}`);
    return (await resp.json()) as HealthInfo;
  }
}
