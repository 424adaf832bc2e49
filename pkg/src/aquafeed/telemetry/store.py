"""In-process time-series store with bounded reordering and snapshot persistence.

One append-only ring per (tank_id, kind). Ingestion is serialized by a lock;
queries copy under the lock so readers see a consistent snapshot. The store is
deliberately simple so an external time-series database can replace it behind
the same surface.
"""

from __future__ import annotations

import enum
import struct
import threading
from bisect import bisect_left, bisect_right, insort
from collections import defaultdict
from pathlib import Path

from ..errors import ParseError
from .messages import TelemetryReading

SNAPSHOT_MAGIC = b"AQSN"
SNAPSHOT_VERSION = 1
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_I64 = struct.Struct("<q")
_POINT = struct.Struct("<qd")

DEFAULT_RETENTION_MS = 24 * 3600 * 1000
DEFAULT_REORDER_WINDOW_MS = 5_000


class IngestResult(enum.Enum):
    STORED = "stored"
    DUPLICATE = "duplicate"
    TOO_OLD = "too_old"


class SeriesStore:
    """Per-(tank, kind) rings of (ts_ms, value) with a sequence deduper."""

    def __init__(
        self,
        retention_ms: int = DEFAULT_RETENTION_MS,
        reorder_window_ms: int = DEFAULT_REORDER_WINDOW_MS,
        max_points_per_series: int = 500_000,
    ):
        self.retention_ms = retention_ms
        self.reorder_window_ms = reorder_window_ms
        self.max_points_per_series = max_points_per_series
        self._series: dict[tuple[str, str], list[tuple[int, float]]] = defaultdict(list)
        self._last_seq: dict[tuple[str, str], int] = {}
        self._dropped: dict[tuple[str, str], int] = defaultdict(int)
        self._lock = threading.Lock()

    def ingest(self, reading: TelemetryReading) -> IngestResult:
        """Deduplicate by (device, seq), then append in time order.

        Arrivals out of order within the reorder window are inserted in place;
        older ones are rejected and counted. Ingesting the same (device, seq)
        twice leaves the store unchanged.
        """
        with self._lock:
            dev_key = (reading.tank_id, reading.device_id)
            last = self._last_seq.get(dev_key)
            if last is not None and reading.seq <= last:
                return IngestResult.DUPLICATE
            series_key = (reading.tank_id, reading.kind)
            points = self._series[series_key]
            if points and reading.ts_ms < points[-1][0] - self.reorder_window_ms:
                self._dropped[series_key] += 1
                # seq still advances: the sample was seen, just unusable
                self._last_seq[dev_key] = reading.seq
                return IngestResult.TOO_OLD
            self._last_seq[dev_key] = reading.seq
            insort(points, (reading.ts_ms, reading.value))
            self._evict(series_key)
            return IngestResult.STORED

    def _evict(self, key: tuple[str, str]) -> None:
        points = self._series[key]
        if not points:
            return
        horizon = points[-1][0] - self.retention_ms
        cut = bisect_left(points, (horizon, float("-inf")))
        if cut:
            del points[:cut]
        if len(points) > self.max_points_per_series:
            del points[: len(points) - self.max_points_per_series]

    def query_range(
        self, tank_id: str, kind: str, from_ts: int, to_ts: int
    ) -> list[tuple[int, float]]:
        """All stored points with from_ts <= ts <= to_ts, time-ordered.

        Unknown series yield an empty list rather than an error.
        """
        if from_ts > to_ts:
            return []
        with self._lock:
            points = self._series.get((tank_id, kind))
            if not points:
                return []
            lo = bisect_left(points, (from_ts, float("-inf")))
            hi = bisect_right(points, (to_ts, float("inf")))
            return points[lo:hi]

    def latest(self, tank_id: str, kind: str) -> tuple[int, float] | None:
        with self._lock:
            points = self._series.get((tank_id, kind))
            return points[-1] if points else None

    def dropped_count(self, tank_id: str, kind: str) -> int:
        with self._lock:
            return self._dropped.get((tank_id, kind), 0)

    def series_keys(self) -> list[tuple[str, str]]:
        with self._lock:
            return sorted(self._series.keys())

    # -- snapshot persistence (magic "AQSN", versioned binary) --------------

    def save(self, path: str | Path) -> None:
        with self._lock:
            chunks = [SNAPSHOT_MAGIC, _U32.pack(SNAPSHOT_VERSION)]
            series = sorted(self._series.items())
            chunks.append(_U32.pack(len(series)))
            for (tank_id, kind), points in series:
                chunks.append(_pack_str(tank_id))
                chunks.append(_pack_str(kind))
                chunks.append(_U32.pack(len(points)))
                for ts, value in points:
                    chunks.append(_POINT.pack(ts, value))
            seqs = sorted(self._last_seq.items())
            chunks.append(_U32.pack(len(seqs)))
            for (tank_id, device_id), seq in seqs:
                chunks.append(_pack_str(tank_id))
                chunks.append(_pack_str(device_id))
                chunks.append(_I64.pack(seq))
        Path(path).write_bytes(b"".join(chunks))

    @classmethod
    def load(cls, path: str | Path, **kwargs) -> "SeriesStore":
        data = Path(path).read_bytes()
        r = _Reader(data)
        magic = r.take(4)
        if magic != SNAPSHOT_MAGIC:
            raise ParseError("byte 0", f"bad magic {magic!r}, expected {SNAPSHOT_MAGIC!r}")
        version = r.u32()
        if version != SNAPSHOT_VERSION:
            raise ParseError("byte 4", f"unsupported snapshot version {version}")
        store = cls(**kwargs)
        for _ in range(r.u32()):
            tank_id = r.string()
            kind = r.string()
            points = [_POINT.unpack(r.take(_POINT.size)) for _ in range(r.u32())]
            store._series[(tank_id, kind)] = [(int(ts), float(v)) for ts, v in points]
        for _ in range(r.u32()):
            tank_id = r.string()
            device_id = r.string()
            store._last_seq[(tank_id, device_id)] = _I64.unpack(r.take(_I64.size))[0]
        return store


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return _U16.pack(len(raw)) + raw


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ParseError(f"byte {self.pos}", f"truncated: need {n} more bytes")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def string(self) -> str:
        n = _U16.unpack(self.take(2))[0]
        return self.take(n).decode("utf-8")
