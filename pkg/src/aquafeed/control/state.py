"""Tank state, alert rules, and feed decisions, with dict serde for the event log."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..biometrics import LengthEstimate, PerFishRation, RationPlan
from ..detections import FusedObservation
from ..errors import InvalidInputError
from ..telemetry.messages import AckMessage, TelemetryReading

ALERT_ACTIONS = ("notify", "actuate_ph")


@dataclass(frozen=True)
class AlertRule:
    """Out-of-band detection for one sensor kind, with hysteresis on clearing."""

    kind: str
    low: float
    high: float
    hysteresis: float = 0.0
    action: str = "notify"

    def __post_init__(self):
        if self.low >= self.high:
            raise InvalidInputError("low/high", f"need low < high, got {self.low} >= {self.high}")
        if self.hysteresis < 0:
            raise InvalidInputError("hysteresis", "must be >= 0")
        if self.action not in ALERT_ACTIONS:
            raise InvalidInputError("action", f"must be one of {ALERT_ACTIONS}, got {self.action!r}")

    def out_of_band(self, value: float) -> bool:
        return value < self.low or value > self.high

    def safely_inside(self, value: float) -> bool:
        return self.low + self.hysteresis <= value <= self.high - self.hysteresis

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "low": self.low,
            "high": self.high,
            "hysteresis": self.hysteresis,
            "action": self.action,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AlertRule":
        return cls(d["kind"], d["low"], d["high"], d.get("hysteresis", 0.0), d.get("action", "notify"))


def default_rules() -> dict[str, AlertRule]:
    """Husbandry defaults: pH held in [6.5, 8.5] with pump correction, DO floor 4 mg/L."""
    return {
        "ph": AlertRule("ph", 6.5, 8.5, hysteresis=0.2, action="actuate_ph"),
        "dissolved_oxygen": AlertRule("dissolved_oxygen", 4.0, 20.0, hysteresis=0.5),
    }


@dataclass(frozen=True)
class Alert:
    kind: str
    raised_ts_ms: int
    value: float
    message: str

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "raised_ts_ms": self.raised_ts_ms,
            "value": self.value,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Alert":
        return cls(d["kind"], d["raised_ts_ms"], d["value"], d["message"])


# -- serde for core-math types carried inside decisions -----------------------


def observation_to_dict(obs: FusedObservation) -> dict:
    return {
        "frame_ts_ms": obs.frame_ts_ms,
        "fused_count": obs.fused_count,
        "lengths_cm": [{"length_cm": l.length_cm, "method": l.method} for l in obs.lengths_cm],
        "source_counts": list(obs.source_counts),
        "degraded": obs.degraded,
    }


def observation_from_dict(d: dict) -> FusedObservation:
    return FusedObservation(
        frame_ts_ms=d["frame_ts_ms"],
        fused_count=d["fused_count"],
        lengths_cm=tuple(LengthEstimate(x["length_cm"], x["method"]) for x in d["lengths_cm"]),
        source_counts=tuple(d["source_counts"]),
        degraded=d.get("degraded", False),
    )


def plan_to_dict(plan: RationPlan) -> dict:
    return {
        "per_fish": [
            {
                "weight_g": p.weight_g,
                "band_index": p.band_index,
                "percent_used": p.percent_used,
                "grams_per_day": p.grams_per_day,
            }
            for p in plan.per_fish
        ],
        "average_grams_per_day": plan.average_grams_per_day,
        "fish_count": plan.fish_count,
        "total_grams_per_day": plan.total_grams_per_day,
        "note": plan.note,
    }


def plan_from_dict(d: dict) -> RationPlan:
    return RationPlan(
        per_fish=tuple(
            PerFishRation(p["weight_g"], p["band_index"], p["percent_used"], p["grams_per_day"])
            for p in d["per_fish"]
        ),
        average_grams_per_day=d["average_grams_per_day"],
        fish_count=d["fish_count"],
        total_grams_per_day=d["total_grams_per_day"],
        note=d.get("note"),
    )


@dataclass
class FeedDecision:
    """One feeding decision: the observation and plan behind it, the command
    issued, and (once acked) its single outcome.

    ``grams_commanded`` is the plan total scaled by ``window_fraction``:
    scheduled feedings split the daily total across the day's windows, manual
    feedings dispense the full plan total.
    """

    decision_id: int
    trigger: str  # "scheduled" | "manual"
    ts_ms: int
    observation: FusedObservation
    plan: RationPlan
    command_id: str
    grams_commanded: float
    window_fraction: float
    outcome: AckMessage | None = None
    degraded: bool = False

    def to_dict(self) -> dict:
        return {
            "decision_id": self.decision_id,
            "trigger": self.trigger,
            "ts_ms": self.ts_ms,
            "observation": observation_to_dict(self.observation),
            "plan": plan_to_dict(self.plan),
            "command_id": self.command_id,
            "grams_commanded": self.grams_commanded,
            "window_fraction": self.window_fraction,
            "outcome": self.outcome.to_dict() if self.outcome else None,
            "degraded": self.degraded,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeedDecision":
        return cls(
            decision_id=d["decision_id"],
            trigger=d["trigger"],
            ts_ms=d["ts_ms"],
            observation=observation_from_dict(d["observation"]),
            plan=plan_from_dict(d["plan"]),
            command_id=d["command_id"],
            grams_commanded=d["grams_commanded"],
            window_fraction=d["window_fraction"],
            outcome=AckMessage.from_dict(d["outcome"]) if d.get("outcome") else None,
            degraded=d.get("degraded", False),
        )


@dataclass
class TankState:
    """Live snapshot of one tank, updated atomically per incoming event."""

    tank_id: str
    latest_readings: dict[str, TelemetryReading] = field(default_factory=dict)
    last_observation: FusedObservation | None = None
    last_plan: RationPlan | None = None
    last_plan_ts_ms: int | None = None
    last_decision: FeedDecision | None = None
    last_feed_ack: AckMessage | None = None
    actuators: dict[str, dict] = field(default_factory=dict)
    alerts: dict[str, Alert] = field(default_factory=dict)
    rules: dict[str, AlertRule] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "tank_id": self.tank_id,
            "latest_readings": {k: r.to_dict() for k, r in sorted(self.latest_readings.items())},
            "last_observation": observation_to_dict(self.last_observation)
            if self.last_observation
            else None,
            "last_plan": plan_to_dict(self.last_plan) if self.last_plan else None,
            "last_plan_ts_ms": self.last_plan_ts_ms,
            "last_decision": self.last_decision.to_dict() if self.last_decision else None,
            "last_feed_ack": self.last_feed_ack.to_dict() if self.last_feed_ack else None,
            "actuators": {k: dict(v) for k, v in sorted(self.actuators.items())},
            "alerts": {k: a.to_dict() for k, a in sorted(self.alerts.items())},
            "rules": {k: r.to_dict() for k, r in sorted(self.rules.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TankState":
        return cls(
            tank_id=d["tank_id"],
            latest_readings={
                k: TelemetryReading.from_dict(r) for k, r in d["latest_readings"].items()
            },
            last_observation=observation_from_dict(d["last_observation"])
            if d.get("last_observation")
            else None,
            last_plan=plan_from_dict(d["last_plan"]) if d.get("last_plan") else None,
            last_plan_ts_ms=d.get("last_plan_ts_ms"),
            last_decision=FeedDecision.from_dict(d["last_decision"])
            if d.get("last_decision")
            else None,
            last_feed_ack=AckMessage.from_dict(d["last_feed_ack"])
            if d.get("last_feed_ack")
            else None,
            actuators={k: dict(v) for k, v in d.get("actuators", {}).items()},
            alerts={k: Alert.from_dict(a) for k, a in d.get("alerts", {}).items()},
            rules={k: AlertRule.from_dict(r) for k, r in d.get("rules", {}).items()},
        )
