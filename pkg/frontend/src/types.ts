/** Shapes served by the control API under /api/v1 (mirrors the server schemas). */

export type SensorKind = "ph" | "dissolved_oxygen" | "temperature";

export interface Reading {
  tank_id: string;
  device_id: string;
  ts_ms: number;
  seq: number;
  kind: SensorKind;
  value: number;
  unit: string;
}

export interface Observation {
  frame_ts_ms: number;
  fused_count: number;
  lengths_cm: { length_cm: number; method: string }[];
  source_counts: number[];
  degraded: boolean;
}

export interface PerFishRation {
  weight_g: number;
  band_index: number;
  percent_used: number;
  grams_per_day: number;
}

export interface RationPlan {
  per_fish: PerFishRation[];
  average_grams_per_day: number;
  fish_count: number;
  total_grams_per_day: number;
  note: string | null;
}

export interface Ack {
  tank_id: string;
  command_id: string;
  kind: string;
  status: "accepted" | "completed" | "failed";
  detail: string;
  measured: number | null;
}

export interface Decision {
  decision_id: number;
  trigger: "scheduled" | "manual";
  ts_ms: number;
  observation: Observation;
  plan: RationPlan;
  command_id: string;
  grams_commanded: number;
  window_fraction: number;
  outcome: Ack | null;
  degraded: boolean;
}

export interface Alert {
  kind: string;
  raised_ts_ms: number;
  value: number;
  message: string;
}

export interface AlertRule {
  kind: string;
  low: number;
  high: number;
  hysteresis: number;
  action: "notify" | "actuate_ph";
}

export interface TankState {
  tank_id: string;
  latest_readings: Record<string, Reading>;
  last_observation: Observation | null;
  last_plan: RationPlan | null;
  last_plan_ts_ms: number | null;
  last_decision: Decision | null;
  last_feed_ack: Ack | null;
  actuators: Record<string, Record<string, unknown>>;
  alerts: Record<string, Alert>;
  rules: Record<string, AlertRule>;
}

/** One state-delta event from /api/v1/stream. */
export interface StreamDelta {
  seq: number;
  ts_ms: number;
  kind: string;
  data: Record<string, unknown>;
}

export interface FeedResult {
  status: "issued" | "pending";
  command_id: string;
  decision_id: number | null;
  decision: Decision | null;
}
