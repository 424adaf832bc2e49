/** End-to-end against the real control service (serve + embedded simulator).
 *
 * Covers the dashboard acceptance criteria: a published telemetry reading
 * reaches the chart series within 2 s, and a manual feed press yields exactly
 * one decision with duplicate presses deduplicated by command_id.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { DashboardModel } from "../src/model.js";
import { StreamClient, type EventSourceLike } from "../src/stream.js";

const PORT = 8752;
const BASE = `http://127.0.0.1:${PORT}`;
const REPO_ROOT = resolve(__dirname, "..", "..");

let server: ChildProcess | null = null;

/** Minimal SSE client over fetch streaming, standing in for EventSource. */
function fetchEventSource(url: string): EventSourceLike {
  const controller = new AbortController();
  const source: EventSourceLike = {
    onmessage: null,
    onerror: null,
    onopen: null,
    close: () => controller.abort(),
  };
  (async () => {
    try {
      const response = await fetch(url, { signal: controller.signal });
      if (!response.ok || !response.body) throw new Error(`stream failed: ${response.status}`);
      source.onopen?.({});
      const reader = response.body.getReader();
      const decoder = new TextDecoder();
      let buffer = "";
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        buffer += decoder.decode(value, { stream: true });
        let sep;
        while ((sep = buffer.indexOf("\n\n")) >= 0) {
          const frame = buffer.slice(0, sep);
          buffer = buffer.slice(sep + 2);
          for (const line of frame.split("\n")) {
            if (line.startsWith("data: ")) {
              source.onmessage?.({ data: line.slice("data: ".length) });
            }
          }
        }
      }
      source.onerror?.({});
    } catch (error) {
      if (!controller.signal.aborted) source.onerror?.(error);
    }
  })();
  return source;
}

async function waitForServer(timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      const response = await fetch(`${BASE}/api/v1/tanks`);
      if (response.ok) return;
    } catch {
      /* not up yet */
    }
    if (Date.now() > deadline) throw new Error("control service never came up");
    await new Promise((resolvePause) => setTimeout(resolvePause, 250));
  }
}

beforeAll(async () => {
  const dir = mkdtempSync(join(tmpdir(), "aquafeed-e2e-"));
  const configPath = join(dir, "cfg.json");
  writeFileSync(
    configPath,
    JSON.stringify({
      tank_id: "t1",
      log_path: join(dir, "t1.aqlg"),
      api: { host: "127.0.0.1", port: PORT },
      controller: { windows_per_day: 3, window_phase_ms: 7_200_000, staleness_ms: 3_600_000 },
    }),
  );
  server = spawn(
    "aquafeed",
    [
      "serve",
      "--config", configPath,
      "--broker-url", "local:fe-e2e",
      "--scenario", join(REPO_ROOT, "fixtures", "scenario_closed_loop.json"),
      "--speed", "600",
    ],
    { stdio: "ignore" },
  );
  await waitForServer();
}, 40_000);

afterAll(() => {
  server?.kill("SIGINT");
});

describe("dashboard against a live control service", () => {
  it(
    "pushes a published reading into the chart within 2 s",
    async () => {
      const api = new ApiClient(BASE);
      const model = new DashboardModel("t1", api);
      await model.load();
      const stream = new StreamClient("t1", {
        baseUrl: BASE,
        makeEventSource: fetchEventSource,
      });
      stream.onDelta = (delta) => model.applyDelta(delta);
      stream.onConnect = () => void model.backfill();
      stream.start();

      // at 600x speed a 300 s telemetry interval emits every 0.5 wall-seconds;
      // a fresh point must land in the chart series within the 2 s budget
      const before = model.series.get("ph")!.lastTs;
      const arrived = await new Promise<boolean>((resolveWait) => {
        const startedAt = Date.now();
        const unsubscribe = model.subscribe(() => {
          if (model.series.get("ph")!.lastTs !== before) {
            unsubscribe();
            resolveWait(Date.now() - startedAt <= 2000);
          }
        });
        setTimeout(() => resolveWait(false), 2500);
      });
      stream.close();
      expect(arrived).toBe(true);
    },
    20_000,
  );

  it(
    "manual feed: one press one decision, duplicates deduplicated",
    async () => {
      const api = new ApiClient(BASE);
      const commandId = `e2e-${Date.now()}`;
      const first = await api.manualFeed("t1", commandId);
      const second = await api.manualFeed("t1", commandId); // duplicate press
      expect(second.command_id).toBe(first.command_id);

      // let the pending feed (if any) resolve on the next frame pair
      const deadline = Date.now() + 15_000;
      let mine: { decision_id: number; outcome: { status: string } | null }[] = [];
      for (;;) {
        const page = await api.decisions("t1", 100);
        mine = page.decisions.filter((d) => d.command_id === commandId) as never;
        if (mine.length > 0 && mine[0]!.outcome) break;
        if (Date.now() > deadline) break;
        await new Promise((resolvePause) => setTimeout(resolvePause, 300));
      }
      expect(mine).toHaveLength(1); // exactly one decision row for the press
      expect(mine[0]!.outcome?.status).toBe("completed");
    },
    20_000,
  );
});
