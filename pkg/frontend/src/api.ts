// REST client for the session service. fetch is injectable for tests.

import type {
  FeedbackPayload,
  SessionMetrics,
  SessionView,
  TimelineEntry,
} from "./types";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export class ApiClient {
  constructor(
    private base: string,
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(`${this.base}${path}`, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  createSession(seed?: number): Promise<{ session_id: string; view: SessionView }> {
    return this.request("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(seed === undefined ? {} : { seed }),
    });
  }

  getView(sessionId: string): Promise<SessionView> {
    return this.request(`/sessions/${sessionId}`);
  }

  postFeedback(sessionId: string, payload: FeedbackPayload): Promise<SessionView> {
    return this.request(`/sessions/${sessionId}/feedback`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  getMetrics(sessionId: string): Promise<SessionMetrics> {
    return this.request(`/sessions/${sessionId}/metrics`);
  }

  getHistory(sessionId: string): Promise<{ session: string; timeline: TimelineEntry[] }> {
    return this.request(`/sessions/${sessionId}/history`);
  }

  getCatalog(): Promise<{
    operators: { index: number; name: string; category: string; description: string }[];
    selectable: string[];
    selector_census: number;
  }> {
    return this.request("/catalog");
  }

  eventsUrl(sessionId: string, after: number): string {
    return `${this.base}/sessions/${sessionId}/events?after=${after}`;
  }
}
