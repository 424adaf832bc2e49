/** DOM wiring: panels, charts, the feed button, and the rules form. */

import { ApiClient, ApiError } from "./api.js";
import { drawSeries } from "./chart.js";
import { ManualFeedController } from "./feed.js";
import { DashboardModel, SENSOR_KINDS } from "./model.js";
import { validateRule } from "./rules.js";
import { StreamClient } from "./stream.js";
import type { SensorKind } from "./types.js";

const KIND_LABELS: Record<SensorKind, string> = {
  ph: "pH",
  dissolved_oxygen: "dissolved O2 (mg/L)",
  temperature: "temperature (degC)",
};

const KIND_COLORS: Record<SensorKind, string> = {
  ph: "#2a9d8f",
  dissolved_oxygen: "#457b9d",
  temperature: "#e76f51",
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function fmtTs(tsMs: number | null): string {
  if (tsMs === null) return "never";
  return new Date(tsMs).toISOString().replace("T", " ").replace(/\.\d+Z/, "Z");
}

async function start(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const tankId = params.get("tank") ?? "t1";
  const api = new ApiClient("");
  const model = new DashboardModel(tankId, api);
  const feed = new ManualFeedController(api, tankId);

  el<HTMLElement>("tank-name").textContent = tankId;

  const charts = new Map<SensorKind, HTMLCanvasElement>();
  const chartsRow = el<HTMLElement>("charts");
  for (const kind of SENSOR_KINDS) {
    const card = document.createElement("div");
    card.className = "card";
    const title = document.createElement("h3");
    title.textContent = KIND_LABELS[kind];
    const value = document.createElement("span");
    value.className = "latest";
    value.id = `latest-${kind}`;
    title.appendChild(value);
    const canvas = document.createElement("canvas");
    canvas.width = 360;
    canvas.height = 140;
    card.append(title, canvas);
    chartsRow.appendChild(card);
    charts.set(kind, canvas);
  }

  function render(): void {
    const snap = model.snapshot();

    const banner = el<HTMLElement>("banner");
    if (snap.connection === "online") {
      banner.className = "banner online";
      banner.textContent = "live";
    } else {
      banner.className = "banner offline";
      banner.textContent =
        snap.connection === "connecting"
          ? "connecting..."
          : `offline - last seen ${fmtTs(snap.lastSeenTsMs)}`;
    }

    for (const kind of SENSOR_KINDS) {
      const reading = snap.latestReadings[kind];
      const label = el<HTMLElement>(`latest-${kind}`);
      label.textContent = reading ? ` ${reading.value.toFixed(2)}` : " -";
      drawSeries(charts.get(kind)!, model.series.get(kind)!.all, {
        stroke: KIND_COLORS[kind],
      });
    }

    el<HTMLElement>("count").textContent =
      snap.fusedCount === null ? "-" : String(snap.fusedCount);
    const plan = snap.plan;
    el<HTMLElement>("plan").textContent = plan
      ? `${plan.total_grams_per_day.toFixed(3)} g/day over ${plan.fish_count} fish ` +
        `(avg ${plan.average_grams_per_day.toFixed(3)} g/fish)`
      : "no plan yet";
    const feedButton = el<HTMLButtonElement>("feed-button");
    feedButton.disabled = !plan || plan.fish_count === 0;

    const feeder = snap.feeder;
    el<HTMLElement>("feeder").textContent = feeder
      ? `${String(feeder["last_status"] ?? "idle")}` +
        (feeder["last_measured_g"] !== undefined
          ? ` - measured ${Number(feeder["last_measured_g"]).toFixed(2)} g`
          : "")
      : "idle";

    const alertBox = el<HTMLElement>("alerts");
    const alerts = Object.values(snap.alerts);
    alertBox.textContent = alerts.length
      ? alerts.map((a) => a.message).join(" | ")
      : "";
    alertBox.style.display = alerts.length ? "block" : "none";

    const tbody = el<HTMLTableSectionElement>("decision-rows");
    tbody.replaceChildren(
      ...snap.decisions.slice(0, 25).map((d) => {
        const tr = document.createElement("tr");
        const outcome = d.outcome
          ? `${d.outcome.status}${d.outcome.measured !== null ? ` (${d.outcome.measured.toFixed(2)} g)` : ""}`
          : "awaiting ack";
        for (const text of [
          String(d.decision_id),
          d.trigger,
          fmtTs(d.ts_ms),
          d.grams_commanded.toFixed(3),
          outcome,
        ]) {
          const td = document.createElement("td");
          td.textContent = text;
          tr.appendChild(td);
        }
        return tr;
      }),
    );
  }

  model.subscribe(render);

  el<HTMLButtonElement>("feed-button").addEventListener("click", () => {
    const plan = model.snapshot().plan;
    const grams = feed.confirmationGrams(plan?.total_grams_per_day ?? null);
    if (grams === null) return;
    if (!confirm(`Dispense ${grams.toFixed(3)} g now?`)) return;
    const status = el<HTMLElement>("feed-status");
    status.textContent = "sending...";
    feed
      .trigger()
      .then((result) => {
        status.textContent =
          result.status === "issued"
            ? `decision #${result.decision_id} issued`
            : "queued for the next frame pair";
      })
      .catch((error: unknown) => {
        status.textContent =
          error instanceof ApiError ? error.detail : `request failed: ${String(error)}`;
      });
  });

  el<HTMLFormElement>("rules-form").addEventListener("submit", (event) => {
    event.preventDefault();
    const kind = el<HTMLSelectElement>("rule-kind").value;
    const low = Number(el<HTMLInputElement>("rule-low").value);
    const high = Number(el<HTMLInputElement>("rule-high").value);
    const hysteresis = Number(el<HTMLInputElement>("rule-hyst").value || "0");
    const status = el<HTMLElement>("rules-status");
    const problem = validateRule(low, high, hysteresis);
    if (problem !== null) {
      status.textContent = problem;
      return;
    }
    const action = kind === "ph" ? "actuate_ph" : "notify";
    api
      .updateRule(tankId, { kind, low, high, hysteresis, action })
      .then(() => {
        status.textContent = `rule for ${kind} saved`;
      })
      .catch((error: unknown) => {
        status.textContent =
          error instanceof ApiError ? error.detail : `request failed: ${String(error)}`;
      });
  });

  const stream = new StreamClient(tankId, {});
  stream.onStateChange = (state) => model.setConnection(state);
  stream.onDelta = (delta) => model.applyDelta(delta);
  stream.onConnect = () => {
    void model.backfill();
  };

  await model.load().catch(() => model.setConnection("offline"));
  stream.start();
  render();
}

void start();
