/** Push-stream subscription with exponential-backoff reconnect.
 *
 * Wraps an EventSource-like object; the factory and clock are injectable so
 * tests can run without a browser or real time. On every (re)connect the
 * `onConnect` hook fires first, letting the model backfill anything missed
 * via the range-query API before live deltas resume.
 */

import type { StreamDelta } from "./types.js";

export interface EventSourceLike {
  onmessage: ((event: { data: string }) => void) | null;
  onerror: ((event: unknown) => void) | null;
  onopen: ((event: unknown) => void) | null;
  close(): void;
}

export type EventSourceFactory = (url: string) => EventSourceLike;
export type Scheduler = (fn: () => void, delayMs: number) => void;

export interface StreamOptions {
  baseUrl?: string;
  makeEventSource?: EventSourceFactory;
  schedule?: Scheduler;
  initialBackoffMs?: number;
  maxBackoffMs?: number;
}

export type ConnectionState = "connecting" | "online" | "offline";

export class StreamClient {
  private source: EventSourceLike | null = null;
  private backoffMs: number;
  private closed = false;
  state: ConnectionState = "connecting";

  onDelta: ((delta: StreamDelta) => void) | null = null;
  onConnect: (() => void) | null = null;
  onStateChange: ((state: ConnectionState) => void) | null = null;

  private readonly baseUrl: string;
  private readonly makeEventSource: EventSourceFactory;
  private readonly schedule: Scheduler;
  private readonly initialBackoffMs: number;
  private readonly maxBackoffMs: number;

  constructor(
    private readonly tankId: string,
    options: StreamOptions = {},
  ) {
    this.baseUrl = options.baseUrl ?? "";
    this.makeEventSource =
      options.makeEventSource ??
      ((url) => new EventSource(url) as unknown as EventSourceLike);
    this.schedule = options.schedule ?? ((fn, ms) => setTimeout(fn, ms));
    this.initialBackoffMs = options.initialBackoffMs ?? 1000;
    this.maxBackoffMs = options.maxBackoffMs ?? 30_000;
    this.backoffMs = this.initialBackoffMs;
  }

  start(): void {
    if (this.closed) return;
    const url = `${this.baseUrl}/api/v1/stream?tank_id=${encodeURIComponent(this.tankId)}`;
    this.source = this.makeEventSource(url);
    this.source.onopen = () => {
      this.backoffMs = this.initialBackoffMs;
      this.setState("online");
      this.onConnect?.();
    };
    this.source.onmessage = (event) => {
      // a delivered message proves the pipe is up even if onopen never fired
      if (this.state !== "online") {
        this.backoffMs = this.initialBackoffMs;
        this.setState("online");
        this.onConnect?.();
      }
      let delta: StreamDelta;
      try {
        delta = JSON.parse(event.data) as StreamDelta;
      } catch {
        return; // tolerate malformed frames; the next delta resynchronizes
      }
      this.onDelta?.(delta);
    };
    this.source.onerror = () => {
      this.source?.close();
      this.source = null;
      if (this.closed) return;
      this.setState("offline");
      const delay = this.backoffMs;
      this.backoffMs = Math.min(this.backoffMs * 2, this.maxBackoffMs);
      this.schedule(() => this.start(), delay);
    };
  }

  close(): void {
    this.closed = true;
    this.source?.close();
    this.source = null;
  }

  private setState(state: ConnectionState): void {
    if (this.state !== state) {
      this.state = state;
      this.onStateChange?.(state);
    }
  }
}
