"""Append-only event log file: magic "AQLG", then length-prefixed CRC'd records.

Record layout: u32 payload length, u32 crc32(payload), payload (canonical JSON
of the event). A truncated or corrupt record stops replay at the last valid
record; the corruption report names the failing sequence number and offset.
Periodic snapshot records let recovery skip most of the log.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

from ..errors import ParseError
from .events import Event, StateFold

LOG_MAGIC = b"AQLG"
_REC = struct.Struct("<II")
MAX_RECORD_BYTES = 64 * 1024 * 1024


def _encode_record(event: Event) -> bytes:
    payload = json.dumps(
        event.to_dict(), sort_keys=True, separators=(",", ":"), allow_nan=False
    ).encode("utf-8")
    return _REC.pack(len(payload), zlib.crc32(payload)) + payload


@dataclass(frozen=True)
class CorruptionReport:
    last_good_seq: int | None
    byte_offset: int
    reason: str


class EventLogWriter:
    """Appends events (flushed per record) and periodic state snapshots."""

    def __init__(self, path: str | Path, snapshot_interval: int = 500):
        self.path = Path(path)
        self.snapshot_interval = snapshot_interval
        self._since_snapshot = 0
        fresh = not self.path.exists() or self.path.stat().st_size == 0
        self._fh = open(self.path, "ab")
        if fresh:
            self._fh.write(LOG_MAGIC)
            self._fh.flush()

    def append(self, event: Event) -> None:
        self._fh.write(_encode_record(event))
        self._fh.flush()
        self._since_snapshot += 1

    def maybe_snapshot(self, fold: StateFold, seq: int, ts_ms: int) -> Event | None:
        """Write a snapshot record when enough events have accumulated."""
        if self._since_snapshot < self.snapshot_interval:
            return None
        event = Event(seq, ts_ms, "snapshot", fold.to_snapshot())
        self.append(event)
        self._since_snapshot = 0
        return event

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.flush()
            self._fh.close()


def read_event_log(path: str | Path) -> tuple[list[Event], CorruptionReport | None]:
    """Read every valid record; returns (events, corruption-or-None)."""
    data = Path(path).read_bytes()
    if len(data) < len(LOG_MAGIC) or data[: len(LOG_MAGIC)] != LOG_MAGIC:
        raise ParseError("byte 0", f"bad magic, expected {LOG_MAGIC!r}")
    events: list[Event] = []
    pos = len(LOG_MAGIC)
    last_good_seq = None
    while pos < len(data):
        if pos + _REC.size > len(data):
            return events, CorruptionReport(last_good_seq, pos, "truncated record header")
        length, crc = _REC.unpack_from(data, pos)
        if length > MAX_RECORD_BYTES:
            return events, CorruptionReport(last_good_seq, pos, f"implausible record length {length}")
        body_start = pos + _REC.size
        if body_start + length > len(data):
            return events, CorruptionReport(last_good_seq, pos, "truncated record body")
        payload = data[body_start : body_start + length]
        if zlib.crc32(payload) != crc:
            return events, CorruptionReport(last_good_seq, pos, "crc mismatch")
        try:
            event = Event.from_dict(json.loads(payload))
        except (ValueError, KeyError, TypeError) as exc:
            return events, CorruptionReport(last_good_seq, pos, f"undecodable event: {exc}")
        events.append(event)
        last_good_seq = event.seq
        pos = body_start + length
    return events, None


def recover_fold(
    path: str | Path, tank_id: str
) -> tuple[StateFold, int | None, CorruptionReport | None]:
    """Rebuild state by replaying the log (from the last snapshot onward).

    Returns (fold, last applied seq, corruption report if replay stopped early).
    """
    events, corruption = read_event_log(path)
    snap_idx = None
    for i in range(len(events) - 1, -1, -1):
        if events[i].kind == "snapshot":
            snap_idx = i
            break
    if snap_idx is not None:
        fold = StateFold.from_snapshot(tank_id, events[snap_idx].data)
        tail = events[snap_idx + 1 :]
    else:
        fold = StateFold(tank_id)
        tail = events
    for event in tail:
        fold.apply(event)
    last_seq = events[-1].seq if events else None
    return fold, last_seq, corruption
