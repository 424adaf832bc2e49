"""Event-sourced state transitions.

Every TankState mutation flows through StateFold.apply, live and during
replay alike, so a replayed log reconstructs the live state exactly.
Event data is plain JSON-able dicts; applying an event never consults a
clock or random source.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..telemetry.messages import AckMessage, TelemetryReading
from .state import Alert, AlertRule, FeedDecision, TankState

EVENT_KINDS = (
    "telemetry",
    "observation",
    "decision",
    "ack",
    "alert_raised",
    "alert_cleared",
    "rule_updated",
    "ph_command",
    "ack_timeout",
    "manual_requested",
    "note",
    "snapshot",
)


@dataclass(frozen=True)
class Event:
    seq: int
    ts_ms: int
    kind: str
    data: dict

    def to_dict(self) -> dict:
        return {"seq": self.seq, "ts_ms": self.ts_ms, "kind": self.kind, "data": self.data}

    @classmethod
    def from_dict(cls, d: dict) -> "Event":
        return cls(d["seq"], d["ts_ms"], d["kind"], d["data"])


class StateFold:
    """TankState plus the decision history, folded from events."""

    def __init__(self, tank_id: str):
        self.state = TankState(tank_id=tank_id)
        self.decisions: dict[int, FeedDecision] = {}
        self.ph_command_count = 0
        self._decision_by_command: dict[str, int] = {}

    def decision_for_command(self, command_id: str) -> FeedDecision | None:
        decision_id = self._decision_by_command.get(command_id)
        return self.decisions.get(decision_id) if decision_id is not None else None

    def apply(self, event: Event) -> None:
        kind, data, state = event.kind, event.data, self.state
        if kind == "telemetry":
            reading = TelemetryReading.from_dict(data)
            state.latest_readings[reading.kind] = reading
        elif kind == "observation":
            from .state import observation_from_dict, plan_from_dict

            state.last_observation = observation_from_dict(data["observation"])
            if data.get("plan") is not None:
                state.last_plan = plan_from_dict(data["plan"])
                state.last_plan_ts_ms = event.ts_ms
        elif kind == "decision":
            decision = FeedDecision.from_dict(data)
            state.last_decision = decision
            self.decisions[decision.decision_id] = decision
            self._decision_by_command[decision.command_id] = decision.decision_id
        elif kind == "ack":
            ack = AckMessage.from_dict(data)
            decision = self.decision_for_command(ack.command_id)
            if decision is not None and decision.outcome is None:
                decision.outcome = ack
                if state.last_decision and state.last_decision.decision_id == decision.decision_id:
                    state.last_decision = decision
            if ack.kind == "feed":
                state.last_feed_ack = ack
            state.actuators[ack.kind] = {
                "last_command_id": ack.command_id,
                "last_status": ack.status,
                "last_detail": ack.detail,
                **({"last_measured_g": ack.measured} if ack.measured is not None else {}),
            }
        elif kind == "alert_raised":
            alert = Alert.from_dict(data)
            state.alerts[alert.kind] = alert
        elif kind == "alert_cleared":
            state.alerts.pop(data["kind"], None)
        elif kind == "rule_updated":
            rule = AlertRule.from_dict(data)
            state.rules[rule.kind] = rule
        elif kind == "ack_timeout":
            command_id = data["command_id"]
            synthetic = AckMessage(
                state.tank_id, command_id, data["kind"], "failed", detail="ack-timeout"
            )
            decision = self.decision_for_command(command_id)
            if decision is not None and decision.outcome is None:
                decision.outcome = synthetic
                if state.last_decision and state.last_decision.decision_id == decision.decision_id:
                    state.last_decision = decision
            state.actuators[data["kind"]] = {
                "last_command_id": command_id,
                "last_status": "timeout",
                "last_detail": "ack-timeout",
            }
        elif kind == "ph_command":
            self.ph_command_count += 1
            state.actuators.setdefault("ph_pump", {}).update(
                {
                    "last_command_id": data["command_id"],
                    "last_status": "issued",
                    "direction": data["direction"],
                    "seconds": data["seconds"],
                }
            )
        elif kind in ("manual_requested", "note", "snapshot"):
            pass  # audit-only records; snapshots are handled by the log reader
        else:
            raise ValueError(f"unknown event kind {kind!r}")

    # -- snapshot support ------------------------------------------------------

    def to_snapshot(self) -> dict:
        return {
            "state": self.state.to_dict(),
            "decisions": [d.to_dict() for d in self.decisions.values()],
            "ph_command_count": self.ph_command_count,
        }

    @classmethod
    def from_snapshot(cls, tank_id: str, snap: dict) -> "StateFold":
        fold = cls(tank_id)
        fold.state = TankState.from_dict(snap["state"])
        fold.ph_command_count = snap.get("ph_command_count", 0)
        for dd in snap["decisions"]:
            decision = FeedDecision.from_dict(dd)
            fold.decisions[decision.decision_id] = decision
            fold._decision_by_command[decision.command_id] = decision.decision_id
        # last_decision must alias the history entry so later acks update both
        if fold.state.last_decision is not None:
            fold.state.last_decision = fold.decisions.get(
                fold.state.last_decision.decision_id, fold.state.last_decision
            )
        return fold
