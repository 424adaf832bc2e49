/** Thin typed client for the control API. The fetch function is injectable
 * so tests (and non-browser hosts) can supply their own. */

import type { AlertRule, Decision, FeedResult, TankState } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(detail);
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}/api/v1${path}`, init);
    const body = await response.text();
    if (!response.ok) {
      let detail = body;
      try {
        const parsed = JSON.parse(body);
        detail = parsed.detail ?? body;
        if (typeof detail !== "string") detail = JSON.stringify(detail);
      } catch {
        /* non-JSON error body; surface it as-is */
      }
      throw new ApiError(response.status, detail);
    }
    return JSON.parse(body) as T;
  }

  tankState(tankId: string): Promise<TankState> {
    return this.request(`/tanks/${encodeURIComponent(tankId)}`);
  }

  telemetryRange(
    tankId: string,
    kind: string,
    fromTs?: number,
    toTs?: number,
  ): Promise<{ points: [number, number][] }> {
    const params = new URLSearchParams({ kind });
    if (fromTs !== undefined) params.set("from_ts", String(fromTs));
    if (toTs !== undefined) params.set("to_ts", String(toTs));
    return this.request(`/tanks/${encodeURIComponent(tankId)}/telemetry?${params}`);
  }

  decisions(tankId: string, limit = 50): Promise<{ decisions: Decision[] }> {
    return this.request(`/tanks/${encodeURIComponent(tankId)}/decisions?limit=${limit}`);
  }

  manualFeed(tankId: string, commandId: string): Promise<FeedResult> {
    return this.request(`/tanks/${encodeURIComponent(tankId)}/feed`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ command_id: commandId }),
    });
  }

  updateRule(tankId: string, rule: AlertRule): Promise<AlertRule> {
    return this.request(`/tanks/${encodeURIComponent(tankId)}/rules`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(rule),
    });
  }
}
