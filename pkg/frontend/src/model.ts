/** Dashboard view-model: server state folded from the snapshot, range
 * backfills, and live stream deltas.
 *
 * Every displayed number originates from an API response; the model never
 * derives feed amounts itself.
 */

import type { ApiClient } from "./api.js";
import type {
  Ack,
  Alert,
  AlertRule,
  Decision,
  Observation,
  RationPlan,
  Reading,
  SensorKind,
  StreamDelta,
} from "./types.js";

export const SENSOR_KINDS: SensorKind[] = ["ph", "dissolved_oxygen", "temperature"];

export interface SeriesPoint {
  ts_ms: number;
  value: number;
}

export class SeriesBuffer {
  private points: SeriesPoint[] = [];

  constructor(private readonly capacity = 2000) {}

  get all(): readonly SeriesPoint[] {
    return this.points;
  }

  get lastTs(): number | null {
    const last = this.points[this.points.length - 1];
    return last ? last.ts_ms : null;
  }

  /** Append in time order, ignoring duplicates of already-charted instants. */
  push(ts_ms: number, value: number): boolean {
    const last = this.lastTs;
    if (last !== null && ts_ms <= last) return false;
    this.points.push({ ts_ms, value });
    if (this.points.length > this.capacity) {
      this.points.splice(0, this.points.length - this.capacity);
    }
    return true;
  }
}

export interface DashboardSnapshot {
  connection: "connecting" | "online" | "offline";
  lastSeenTsMs: number | null;
  latestReadings: Record<string, Reading>;
  fusedCount: number | null;
  plan: RationPlan | null;
  lastObservation: Observation | null;
  decisions: Decision[];
  alerts: Record<string, Alert>;
  rules: Record<string, AlertRule>;
  feeder: Record<string, unknown> | null;
}

export class DashboardModel {
  readonly series = new Map<SensorKind, SeriesBuffer>();
  private latestReadings: Record<string, Reading> = {};
  private decisionsById = new Map<number, Decision>();
  private alerts: Record<string, Alert> = {};
  private rules: Record<string, AlertRule> = {};
  private plan: RationPlan | null = null;
  private lastObservation: Observation | null = null;
  private feeder: Record<string, unknown> | null = null;
  private connection: "connecting" | "online" | "offline" = "connecting";
  private lastSeenTsMs: number | null = null;
  private listeners = new Set<() => void>();

  constructor(
    readonly tankId: string,
    private readonly api: ApiClient,
  ) {
    for (const kind of SENSOR_KINDS) this.series.set(kind, new SeriesBuffer());
  }

  subscribe(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  snapshot(): DashboardSnapshot {
    const decisions = [...this.decisionsById.values()].sort(
      (a, b) => b.decision_id - a.decision_id,
    );
    return {
      connection: this.connection,
      lastSeenTsMs: this.lastSeenTsMs,
      latestReadings: this.latestReadings,
      fusedCount: this.lastObservation?.fused_count ?? null,
      plan: this.plan,
      lastObservation: this.lastObservation,
      decisions,
      alerts: this.alerts,
      rules: this.rules,
      feeder: this.feeder,
    };
  }

  setConnection(state: "connecting" | "online" | "offline"): void {
    this.connection = state;
    this.notify();
  }

  /** Initial load: state snapshot, chart backfill, decision history. */
  async load(): Promise<void> {
    const state = await this.api.tankState(this.tankId);
    this.latestReadings = state.latest_readings;
    this.plan = state.last_plan;
    this.lastObservation = state.last_observation;
    this.alerts = state.alerts;
    this.rules = state.rules;
    this.feeder = state.actuators["feed"] ?? null;
    for (const reading of Object.values(state.latest_readings)) {
      this.lastSeenTsMs = Math.max(this.lastSeenTsMs ?? 0, reading.ts_ms);
    }
    const history = await this.api.decisions(this.tankId);
    for (const decision of history.decisions) {
      this.decisionsById.set(decision.decision_id, decision);
    }
    await this.backfill();
    this.notify();
  }

  /** Fill chart gaps from the range query (start-up and after reconnects). */
  async backfill(): Promise<void> {
    for (const kind of SENSOR_KINDS) {
      const buffer = this.series.get(kind)!;
      const from = buffer.lastTs !== null ? buffer.lastTs + 1 : 0;
      const range = await this.api.telemetryRange(this.tankId, kind, from);
      for (const [ts, value] of range.points) buffer.push(ts, value);
    }
    this.notify();
  }

  /** Apply one live stream delta. */
  applyDelta(delta: StreamDelta): void {
    this.lastSeenTsMs = Math.max(this.lastSeenTsMs ?? 0, delta.ts_ms);
    switch (delta.kind) {
      case "telemetry": {
        const reading = delta.data as unknown as Reading;
        this.latestReadings = { ...this.latestReadings, [reading.kind]: reading };
        this.series.get(reading.kind)?.push(reading.ts_ms, reading.value);
        break;
      }
      case "observation": {
        const data = delta.data as { observation: Observation; plan: RationPlan | null };
        this.lastObservation = data.observation;
        if (data.plan) this.plan = data.plan;
        break;
      }
      case "decision": {
        const decision = delta.data as unknown as Decision;
        this.decisionsById.set(decision.decision_id, decision);
        break;
      }
      case "ack": {
        const ack = delta.data as unknown as Ack;
        for (const decision of this.decisionsById.values()) {
          if (decision.command_id === ack.command_id && !decision.outcome) {
            this.decisionsById.set(decision.decision_id, { ...decision, outcome: ack });
          }
        }
        if (ack.kind === "feed") {
          this.feeder = {
            last_command_id: ack.command_id,
            last_status: ack.status,
            last_detail: ack.detail,
            ...(ack.measured !== null ? { last_measured_g: ack.measured } : {}),
          };
        }
        break;
      }
      case "alert_raised": {
        const alert = delta.data as unknown as Alert;
        this.alerts = { ...this.alerts, [alert.kind]: alert };
        break;
      }
      case "alert_cleared": {
        const { [String(delta.data["kind"])]: _gone, ...rest } = this.alerts;
        this.alerts = rest;
        break;
      }
      case "rule_updated": {
        const rule = delta.data as unknown as AlertRule;
        this.rules = { ...this.rules, [rule.kind]: rule };
        break;
      }
      default:
        break; // notes, manual_requested, snapshots: nothing to render
    }
    this.notify();
  }
}
