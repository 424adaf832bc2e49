"""Payload codec: canonical encoding, round trips, topic agreement, fuzz totality."""

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aquafeed.errors import AquafeedError, DecodeError, EncodeError, ProtocolError
from aquafeed.detections import FrameDetections
from aquafeed.telemetry import (
    AckMessage,
    CommandMessage,
    TelemetryReading,
    ack_topic,
    cmd_topic,
    decode_payload,
    encode_payload,
    frames_topic,
    parse_topic,
    telemetry_topic,
)
from aquafeed.telemetry.codec import topic_for

from test_detections import frame_detections_strategy


def test_topic_schema():
    assert telemetry_topic("t1", "ph") == "aqua/t1/telemetry/ph"
    assert frames_topic("t1", "A") == "aqua/t1/frames/A"
    assert cmd_topic("t1", "feed") == "aqua/t1/cmd/feed"
    assert ack_topic("t1", "c-9") == "aqua/t1/ack/c-9"
    assert parse_topic("aqua/t1/telemetry/ph") == ("t1", "telemetry", "ph")
    with pytest.raises(ProtocolError):
        parse_topic("aqua/t1/bogus/x")
    with pytest.raises(ProtocolError):
        parse_topic("other/t1/telemetry/ph")


def test_encode_reading_field_names():
    r = TelemetryReading.make("t1", "dev1", 1000, 1, "ph", 7.2)
    payload = encode_payload(r)
    doc = json.loads(payload)
    assert set(doc) == {"tank_id", "device_id", "ts_ms", "seq", "kind", "value", "unit"}
    assert doc["value"] == 7.2
    assert doc["unit"] == "pH"
    # canonical bytes are deterministic
    assert payload == encode_payload(r)


def test_feed_grams_shortest_round_trip():
    cmd = CommandMessage("t1", "c1", "feed", 5, grams=9.529)
    decoded = decode_payload(cmd_topic("t1", "feed"), encode_payload(cmd))
    assert decoded.grams == 9.529


def test_decode_reading():
    r = TelemetryReading.make("t1", "dev1", 1000, 1, "ph", 7.2)
    assert decode_payload(telemetry_topic("t1", "ph"), encode_payload(r)) == r


def test_topic_payload_kind_mismatch():
    r = TelemetryReading.make("t1", "dev1", 1000, 1, "temperature", 27.0)
    with pytest.raises(ProtocolError):
        decode_payload(telemetry_topic("t1", "ph"), encode_payload(r))


def test_topic_payload_tank_mismatch():
    r = TelemetryReading.make("t2", "dev1", 1000, 1, "ph", 7.2)
    with pytest.raises(ProtocolError):
        decode_payload(telemetry_topic("t1", "ph"), encode_payload(r))


def test_frames_camera_mismatch():
    fd = FrameDetections("A", 0, 416, 416, 0, ())
    with pytest.raises(ProtocolError):
        decode_payload(frames_topic("t1", "B"), encode_payload(fd))


def test_malformed_payloads():
    topic = telemetry_topic("t1", "ph")
    for bad in (b"", b"{", b"[1]", b'{"tank_id": "t1"}', b"\xff\xfe", b'{"value": NaN}'):
        with pytest.raises(DecodeError):
            decode_payload(topic, bad)


def test_encode_rejects_unsupported():
    with pytest.raises(EncodeError):
        encode_payload(object())


readings = st.builds(
    TelemetryReading.make,
    tank_id=st.text(min_size=1, max_size=8, alphabet="abct123"),
    device_id=st.text(min_size=1, max_size=8, alphabet="dev-456"),
    ts_ms=st.integers(1, 2**52),
    seq=st.integers(0, 2**31),
    kind=st.sampled_from(["ph", "dissolved_oxygen", "temperature"]),
    value=st.floats(allow_nan=False, allow_infinity=False, width=64),
)

feed_cmds = st.builds(
    lambda t, c, ts, g: CommandMessage(t, c, "feed", ts, grams=g),
    st.text(min_size=1, max_size=8, alphabet="abct123"),
    st.text(min_size=1, max_size=16, alphabet="abcdef0123456789-"),
    st.integers(0, 2**52),
    st.floats(min_value=1e-6, max_value=1e6, allow_nan=False),
)

ph_cmds = st.builds(
    lambda t, c, ts, d, s: CommandMessage(t, c, "ph_pump", ts, direction=d, seconds=s),
    st.text(min_size=1, max_size=8, alphabet="abct123"),
    st.text(min_size=1, max_size=16, alphabet="abcdef0123456789-"),
    st.integers(0, 2**52),
    st.sampled_from(["raise", "lower"]),
    st.floats(min_value=1e-3, max_value=3600, allow_nan=False),
)

@st.composite
def acks(draw):
    kind = draw(st.sampled_from(["feed", "ph_pump"]))
    status = draw(st.sampled_from(["accepted", "completed", "failed"]))
    grams = st.floats(min_value=0, max_value=1e6, allow_nan=False)
    if kind == "feed" and status == "completed":
        measured = draw(grams)
    else:
        measured = draw(st.one_of(st.none(), grams))
    return AckMessage(
        draw(st.text(min_size=1, max_size=8, alphabet="abct123")),
        draw(st.text(min_size=1, max_size=16, alphabet="abcdef0123456789-")),
        kind,
        status,
        draw(st.text(max_size=30)),
        measured,
    )


@given(st.one_of(readings, feed_cmds, ph_cmds, acks()))
@settings(max_examples=300)
def test_round_trip_all_message_kinds(msg):
    assert decode_payload(topic_for(msg), encode_payload(msg)) == msg


@given(frame_detections_strategy())
@settings(max_examples=100)
def test_round_trip_frames(fd):
    assert decode_payload(frames_topic("t1", fd.camera_id), encode_payload(fd)) == fd


def test_fuzz_never_crashes():
    rng = random.Random(1234)
    topics = [
        telemetry_topic("t1", "ph"),
        frames_topic("t1", "A"),
        cmd_topic("t1", "feed"),
        ack_topic("t1", "c1"),
    ]
    template = encode_payload(TelemetryReading.make("t1", "d", 10, 1, "ph", 7.0))
    for i in range(2000):
        if rng.random() < 0.5:
            data = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 80)))
        else:  # mutate a valid payload
            data = bytearray(template)
            for _ in range(rng.randrange(1, 6)):
                data[rng.randrange(len(data))] = rng.randrange(256)
            data = bytes(data)
        try:
            decode_payload(topics[i % 4], data)
        except AquafeedError:
            pass  # structured error is the contract
