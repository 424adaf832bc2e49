"""Message types carried over the bus: sensor readings, commands, acks."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import InvalidInputError

SENSOR_KINDS = ("ph", "dissolved_oxygen", "temperature")
KIND_UNITS = {"ph": "pH", "dissolved_oxygen": "mg_per_L", "temperature": "celsius"}

COMMAND_KINDS = ("feed", "ph_pump")
PH_DIRECTIONS = ("raise", "lower")
ACK_STATUSES = ("accepted", "completed", "failed")


@dataclass(frozen=True)
class TelemetryReading:
    """One timestamped sensor sample from one device."""

    tank_id: str
    device_id: str
    ts_ms: int
    seq: int
    kind: str
    value: float
    unit: str

    def __post_init__(self):
        if not self.tank_id:
            raise InvalidInputError("tank_id", "must be non-empty")
        if not self.device_id:
            raise InvalidInputError("device_id", "must be non-empty")
        if self.ts_ms <= 0:
            raise InvalidInputError("ts_ms", f"must be > 0, got {self.ts_ms}")
        if self.seq < 0:
            raise InvalidInputError("seq", f"must be >= 0, got {self.seq}")
        if self.kind not in SENSOR_KINDS:
            raise InvalidInputError("kind", f"unknown sensor kind {self.kind!r}")
        if self.unit != KIND_UNITS[self.kind]:
            raise InvalidInputError(
                "unit", f"kind {self.kind!r} requires unit {KIND_UNITS[self.kind]!r}, got {self.unit!r}"
            )
        if not math.isfinite(self.value):
            raise InvalidInputError("value", f"must be finite, got {self.value}")

    @classmethod
    def make(cls, tank_id: str, device_id: str, ts_ms: int, seq: int, kind: str, value: float):
        return cls(tank_id, device_id, ts_ms, seq, kind, value, KIND_UNITS.get(kind, ""))

    def to_dict(self) -> dict:
        return {
            "tank_id": self.tank_id,
            "device_id": self.device_id,
            "ts_ms": self.ts_ms,
            "seq": self.seq,
            "kind": self.kind,
            "value": self.value,
            "unit": self.unit,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TelemetryReading":
        return cls(
            tank_id=d["tank_id"],
            device_id=d["device_id"],
            ts_ms=d["ts_ms"],
            seq=d["seq"],
            kind=d["kind"],
            value=d["value"],
            unit=d["unit"],
        )


@dataclass(frozen=True)
class CommandMessage:
    """Actuation request: feed a mass of pellets, or run the pH pump for a burst.

    ``grams`` is set for feed commands; ``direction``/``seconds`` for ph_pump.
    """

    tank_id: str
    command_id: str
    kind: str
    issued_ts_ms: int
    grams: float | None = None
    direction: str | None = None
    seconds: float | None = None

    def __post_init__(self):
        if not self.tank_id:
            raise InvalidInputError("tank_id", "must be non-empty")
        if not self.command_id:
            raise InvalidInputError("command_id", "must be non-empty")
        if self.kind not in COMMAND_KINDS:
            raise InvalidInputError("kind", f"unknown command kind {self.kind!r}")
        if self.kind == "feed":
            if self.grams is None or not (self.grams > 0 and math.isfinite(self.grams)):
                raise InvalidInputError("grams", f"feed commands need grams > 0, got {self.grams}")
            if self.direction is not None or self.seconds is not None:
                raise InvalidInputError("direction/seconds", "not valid for feed commands")
        else:
            if self.direction not in PH_DIRECTIONS:
                raise InvalidInputError("direction", f"must be one of {PH_DIRECTIONS}, got {self.direction}")
            if self.seconds is None or not (self.seconds > 0 and math.isfinite(self.seconds)):
                raise InvalidInputError("seconds", f"ph_pump commands need seconds > 0, got {self.seconds}")
            if self.grams is not None:
                raise InvalidInputError("grams", "not valid for ph_pump commands")

    def to_dict(self) -> dict:
        d = {
            "tank_id": self.tank_id,
            "command_id": self.command_id,
            "kind": self.kind,
            "issued_ts_ms": self.issued_ts_ms,
        }
        if self.kind == "feed":
            d["grams"] = self.grams
        else:
            d["direction"] = self.direction
            d["seconds"] = self.seconds
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CommandMessage":
        return cls(
            tank_id=d["tank_id"],
            command_id=d["command_id"],
            kind=d["kind"],
            issued_ts_ms=d["issued_ts_ms"],
            grams=d.get("grams"),
            direction=d.get("direction"),
            seconds=d.get("seconds"),
        )


@dataclass(frozen=True)
class AckMessage:
    """Terminal (or accepted) response to a command. Completed feed acks carry
    the load-cell-measured grams."""

    tank_id: str
    command_id: str
    kind: str
    status: str
    detail: str = ""
    measured: float | None = None

    def __post_init__(self):
        if not self.tank_id:
            raise InvalidInputError("tank_id", "must be non-empty")
        if not self.command_id:
            raise InvalidInputError("command_id", "must be non-empty")
        if self.kind not in COMMAND_KINDS:
            raise InvalidInputError("kind", f"unknown command kind {self.kind!r}")
        if self.status not in ACK_STATUSES:
            raise InvalidInputError("status", f"must be one of {ACK_STATUSES}, got {self.status!r}")
        if self.kind == "feed" and self.status == "completed" and self.measured is None:
            raise InvalidInputError("measured", "completed feed acks must carry measured grams")
        if self.measured is not None and not (math.isfinite(self.measured) and self.measured >= 0):
            raise InvalidInputError("measured", f"must be finite and >= 0, got {self.measured}")

    def to_dict(self) -> dict:
        d = {
            "tank_id": self.tank_id,
            "command_id": self.command_id,
            "kind": self.kind,
            "status": self.status,
            "detail": self.detail,
        }
        if self.measured is not None:
            d["measured"] = self.measured
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AckMessage":
        return cls(
            tank_id=d["tank_id"],
            command_id=d["command_id"],
            kind=d["kind"],
            status=d["status"],
            detail=d.get("detail", ""),
            measured=d.get("measured"),
        )
