"""Request/response schemas for the control API."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field, model_validator


class ReadingModel(BaseModel):
    tank_id: str
    device_id: str
    ts_ms: int
    seq: int
    kind: str
    value: float
    unit: str


class LengthModel(BaseModel):
    length_cm: float
    method: str


class ObservationModel(BaseModel):
    frame_ts_ms: int
    fused_count: int
    lengths_cm: list[LengthModel]
    source_counts: list[int]
    degraded: bool = False


class PerFishModel(BaseModel):
    weight_g: float
    band_index: int
    percent_used: float
    grams_per_day: float


class PlanModel(BaseModel):
    per_fish: list[PerFishModel]
    average_grams_per_day: float
    fish_count: int
    total_grams_per_day: float
    note: str | None = None


class AckModel(BaseModel):
    tank_id: str
    command_id: str
    kind: str
    status: str
    detail: str = ""
    measured: float | None = None


class DecisionModel(BaseModel):
    decision_id: int
    trigger: str
    ts_ms: int
    observation: ObservationModel
    plan: PlanModel
    command_id: str
    grams_commanded: float
    window_fraction: float
    outcome: AckModel | None = None
    degraded: bool = False


class AlertModel(BaseModel):
    kind: str
    raised_ts_ms: int
    value: float
    message: str


class RuleModel(BaseModel):
    kind: str
    low: float
    high: float
    hysteresis: float = 0.0
    action: Literal["notify", "actuate_ph"] = "notify"

    @model_validator(mode="after")
    def _low_below_high(self):
        if self.low >= self.high:
            raise ValueError("low must be below high")
        if self.hysteresis < 0:
            raise ValueError("hysteresis must be >= 0")
        return self


class TankStateModel(BaseModel):
    tank_id: str
    latest_readings: dict[str, ReadingModel]
    last_observation: ObservationModel | None = None
    last_plan: PlanModel | None = None
    last_plan_ts_ms: int | None = None
    last_decision: DecisionModel | None = None
    last_feed_ack: AckModel | None = None
    actuators: dict[str, dict]
    alerts: dict[str, AlertModel]
    rules: dict[str, RuleModel]


class TankListResponse(BaseModel):
    tanks: list[str]


class TelemetryRangeResponse(BaseModel):
    tank_id: str
    kind: str
    points: list[tuple[int, float]]


class DecisionPageResponse(BaseModel):
    tank_id: str
    decisions: list[DecisionModel]


class EventModel(BaseModel):
    seq: int
    ts_ms: int
    kind: str
    data: dict


class EventPageResponse(BaseModel):
    tank_id: str
    events: list[EventModel]


class FeedRequest(BaseModel):
    command_id: str | None = Field(
        default=None, description="Client-generated id; retries with the same id are no-ops"
    )


class FeedResponse(BaseModel):
    status: Literal["issued", "pending"]
    command_id: str
    decision_id: int | None = None
    decision: DecisionModel | None = None


class ScenarioRequest(BaseModel):
    action: Literal["pause", "resume", "set_speed"]
    speed: float | None = None


class ScenarioResponse(BaseModel):
    paused: bool
    speed: float | None
    sim_now_ms: int | None


class ErrorResponse(BaseModel):
    error: str
    detail: str
