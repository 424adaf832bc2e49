"""MQTT topic schema, payload codecs, and the in-process telemetry store."""

from .messages import AckMessage, CommandMessage, TelemetryReading, SENSOR_KINDS, KIND_UNITS
from .codec import (
    ack_topic,
    cmd_topic,
    decode_payload,
    encode_payload,
    frames_topic,
    parse_topic,
    telemetry_topic,
)
from .store import IngestResult, SeriesStore

__all__ = [
    "AckMessage",
    "CommandMessage",
    "TelemetryReading",
    "SENSOR_KINDS",
    "KIND_UNITS",
    "ack_topic",
    "cmd_topic",
    "decode_payload",
    "encode_payload",
    "frames_topic",
    "parse_topic",
    "telemetry_topic",
    "IngestResult",
    "SeriesStore",
]
