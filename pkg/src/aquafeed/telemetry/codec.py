"""Topic schema and canonical payload encoding.

Topics are hierarchical per tank so one wildcard subscription covers a tank:

    aqua/{tank_id}/telemetry/{kind}
    aqua/{tank_id}/frames/{camera_id}
    aqua/{tank_id}/cmd/{kind}
    aqua/{tank_id}/ack/{command_id}

Payloads are canonical JSON: sorted keys, no whitespace, integers unquoted,
floats in shortest round-trip form. encode(decode(x)) is byte-identical.
"""

from __future__ import annotations

import json

from ..detections import FrameDetections, frame_detections_to_dict, parse_frame_detections
from ..errors import DecodeError, EncodeError, InvalidInputError, ParseError, ProtocolError
from .messages import AckMessage, CommandMessage, TelemetryReading, SENSOR_KINDS, COMMAND_KINDS

TOPIC_ROOT = "aqua"
Message = TelemetryReading | CommandMessage | AckMessage | FrameDetections


def telemetry_topic(tank_id: str, kind: str) -> str:
    return f"{TOPIC_ROOT}/{tank_id}/telemetry/{kind}"


def frames_topic(tank_id: str, camera_id: str) -> str:
    return f"{TOPIC_ROOT}/{tank_id}/frames/{camera_id}"


def cmd_topic(tank_id: str, kind: str) -> str:
    return f"{TOPIC_ROOT}/{tank_id}/cmd/{kind}"


def ack_topic(tank_id: str, command_id: str) -> str:
    return f"{TOPIC_ROOT}/{tank_id}/ack/{command_id}"


def topic_for(msg: Message) -> str:
    if isinstance(msg, TelemetryReading):
        return telemetry_topic(msg.tank_id, msg.kind)
    if isinstance(msg, CommandMessage):
        return cmd_topic(msg.tank_id, msg.kind)
    if isinstance(msg, AckMessage):
        return ack_topic(msg.tank_id, msg.command_id)
    if isinstance(msg, FrameDetections):
        raise InvalidInputError("msg", "frames topics need the tank_id; use frames_topic()")
    raise InvalidInputError("msg", f"unsupported message type {type(msg).__name__}")


def parse_topic(topic: str) -> tuple[str, str, str]:
    """Split a topic into (tank_id, category, detail); raises ProtocolError."""
    parts = topic.split("/")
    if len(parts) != 4 or parts[0] != TOPIC_ROOT or not all(parts[1:]):
        raise ProtocolError(f"topic {topic!r} does not match {TOPIC_ROOT}/<tank>/<category>/<detail>")
    _, tank_id, category, detail = parts
    if category not in ("telemetry", "frames", "cmd", "ack"):
        raise ProtocolError(f"unknown topic category {category!r} in {topic!r}")
    return tank_id, category, detail


def encode_payload(msg: Message) -> bytes:
    """Canonical byte encoding of a message; deterministic for a given message."""
    if isinstance(msg, FrameDetections):
        d = frame_detections_to_dict(msg)
    elif isinstance(msg, (TelemetryReading, CommandMessage, AckMessage)):
        d = msg.to_dict()
    else:
        raise EncodeError(f"unsupported message type {type(msg).__name__}")
    try:
        return json.dumps(d, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")
    except ValueError as exc:
        raise EncodeError(str(exc)) from None


def _load_json(data: bytes) -> dict:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DecodeError(f"payload is not UTF-8: {exc}") from None
    try:
        doc = json.loads(
            text, parse_constant=lambda c: (_ for _ in ()).throw(ValueError(f"bad constant {c}"))
        )
    except ValueError as exc:
        raise DecodeError(f"payload is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise DecodeError("payload must be a JSON object")
    return doc


def decode_payload(topic: str, data: bytes) -> Message:
    """Decode payload bytes according to the topic they arrived on.

    Raises DecodeError for malformed bytes, ProtocolError when a valid payload
    disagrees with its topic (wrong kind, tank, camera, or command id).
    """
    tank_id, category, detail = parse_topic(topic)

    if category == "frames":
        try:
            fd = parse_frame_detections(data)
        except ParseError as exc:
            raise DecodeError(str(exc)) from None
        if fd.camera_id != detail:
            raise ProtocolError(
                f"camera_id {fd.camera_id!r} does not match topic camera {detail!r}"
            )
        return fd

    doc = _load_json(data)
    try:
        if category == "telemetry":
            if detail not in SENSOR_KINDS:
                raise ProtocolError(f"unknown telemetry kind {detail!r} in topic {topic!r}")
            msg = TelemetryReading.from_dict(doc)
        elif category == "cmd":
            if detail not in COMMAND_KINDS:
                raise ProtocolError(f"unknown command kind {detail!r} in topic {topic!r}")
            msg = CommandMessage.from_dict(doc)
        else:
            msg = AckMessage.from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise DecodeError(f"payload missing or mistyped field: {exc}") from None
    except InvalidInputError as exc:
        raise DecodeError(str(exc)) from None

    if msg.tank_id != tank_id:
        raise ProtocolError(f"tank_id {msg.tank_id!r} does not match topic tank {tank_id!r}")
    if category == "telemetry" and msg.kind != detail:
        raise ProtocolError(f"telemetry kind {msg.kind!r} does not match topic kind {detail!r}")
    if category == "cmd" and msg.kind != detail:
        raise ProtocolError(f"command kind {msg.kind!r} does not match topic kind {detail!r}")
    if category == "ack" and msg.command_id != detail:
        raise ProtocolError(
            f"ack command_id {msg.command_id!r} does not match topic command {detail!r}"
        )
    return msg
