/** Test doubles: a controllable EventSource and a canned-response fetch. */

import type { EventSourceLike } from "../src/stream.js";
import type { FetchLike } from "../src/api.js";

export class FakeEventSource implements EventSourceLike {
  onmessage: ((event: { data: string }) => void) | null = null;
  onerror: ((event: unknown) => void) | null = null;
  onopen: ((event: unknown) => void) | null = null;
  closed = false;

  constructor(readonly url: string) {}

  close(): void {
    this.closed = true;
  }

  open(): void {
    this.onopen?.({});
  }

  emit(data: unknown): void {
    this.onmessage?.({ data: JSON.stringify(data) });
  }

  fail(): void {
    this.onerror?.({});
  }
}

export interface RecordedRequest {
  url: string;
  method: string;
  body: unknown;
}

export interface FakeFetch {
  fetch: FetchLike;
  requests: RecordedRequest[];
  /** Map of "METHOD path-prefix" to a responder. */
  route(method: string, prefix: string, responder: (req: RecordedRequest) => unknown): void;
}

export function makeFakeFetch(): FakeFetch {
  const requests: RecordedRequest[] = [];
  const routes: { method: string; prefix: string; responder: (req: RecordedRequest) => unknown }[] =
    [];

  const fetchFn: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    const request = { url, method, body };
    requests.push(request);
    for (const route of routes) {
      if (route.method === method && url.includes(route.prefix)) {
        const result = route.responder(request);
        if (result instanceof Response) return result;
        return new Response(JSON.stringify(result), {
          status: 200,
          headers: { "content-type": "application/json" },
        });
      }
    }
    return new Response(JSON.stringify({ error: "not-found", detail: `no route for ${url}` }), {
      status: 404,
    });
  };

  return {
    fetch: fetchFn,
    requests,
    route(method, prefix, responder) {
      routes.push({ method, prefix, responder });
    },
  };
}

export function emptyTankState(tankId = "t1") {
  return {
    tank_id: tankId,
    latest_readings: {},
    last_observation: null,
    last_plan: null,
    last_plan_ts_ms: null,
    last_decision: null,
    last_feed_ack: null,
    actuators: {},
    alerts: {},
    rules: {},
  };
}
