"""Minimal MQTT 3.1.1 client: just what the control plane needs.

Implements CONNECT/CONNACK, PUBLISH at QoS 0 and 1 (with PUBACK retry),
SUBSCRIBE/SUBACK, PING and DISCONNECT over a plain TCP socket. No TLS, no
wills, no persistent sessions. The packet codec is pure and separately
testable; the client wraps it with a reader thread and exposes the same
publish/subscribe surface as the in-process bus.
"""

from __future__ import annotations

import logging
import socket
import struct
import threading
import time
import uuid
from dataclasses import dataclass
from urllib.parse import urlparse

from .bus import MessageHandler, topic_matches
from .errors import AquafeedError, DecodeError

logger = logging.getLogger(__name__)

PROTOCOL_NAME = b"MQTT"
PROTOCOL_LEVEL = 4  # MQTT 3.1.1

CONNECT, CONNACK, PUBLISH, PUBACK = 1, 2, 3, 4
SUBSCRIBE, SUBACK, UNSUBSCRIBE, UNSUBACK = 8, 9, 10, 11
PINGREQ, PINGRESP, DISCONNECT = 12, 13, 14

CONNACK_CODES = {
    0: "connection accepted",
    1: "unacceptable protocol version",
    2: "identifier rejected",
    3: "server unavailable",
    4: "bad user name or password",
    5: "not authorized",
}


class MqttError(AquafeedError):
    """Broker connection or protocol failure."""


# ---------------------------------------------------------------------------
# Packet codec (pure functions)
# ---------------------------------------------------------------------------


def encode_remaining_length(n: int) -> bytes:
    if n < 0 or n > 268_435_455:
        raise MqttError(f"remaining length {n} out of range")
    out = bytearray()
    while True:
        n, digit = divmod(n, 128)
        out.append(digit | (0x80 if n else 0))
        if not n:
            return bytes(out)


def decode_remaining_length(data: bytes, offset: int) -> tuple[int, int]:
    """Returns (value, bytes consumed); raises DecodeError if incomplete/overlong."""
    value, shift, consumed = 0, 0, 0
    while True:
        if offset + consumed >= len(data):
            raise DecodeError("incomplete remaining-length field")
        byte = data[offset + consumed]
        value |= (byte & 0x7F) << shift
        consumed += 1
        if not byte & 0x80:
            return value, consumed
        shift += 7
        if consumed == 4:
            raise DecodeError("remaining-length field longer than 4 bytes")


def _utf8_field(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack(">H", len(raw)) + raw


def _packet(ptype: int, flags: int, body: bytes) -> bytes:
    return bytes([(ptype << 4) | flags]) + encode_remaining_length(len(body)) + body


def encode_connect(client_id: str, keepalive_s: int, clean_session: bool = True) -> bytes:
    flags = 0x02 if clean_session else 0x00
    body = (
        _utf8_field(PROTOCOL_NAME.decode())
        + bytes([PROTOCOL_LEVEL, flags])
        + struct.pack(">H", keepalive_s)
        + _utf8_field(client_id)
    )
    return _packet(CONNECT, 0, body)


def encode_publish(
    topic: str, payload: bytes, qos: int = 0, packet_id: int | None = None, dup: bool = False
) -> bytes:
    if qos not in (0, 1):
        raise MqttError(f"unsupported qos {qos}")
    if qos == 1 and packet_id is None:
        raise MqttError("qos 1 publish needs a packet id")
    flags = (0x08 if dup else 0) | (qos << 1)
    body = _utf8_field(topic)
    if qos == 1:
        body += struct.pack(">H", packet_id)
    return _packet(PUBLISH, flags, body + payload)


def encode_puback(packet_id: int) -> bytes:
    return _packet(PUBACK, 0, struct.pack(">H", packet_id))


def encode_subscribe(packet_id: int, filters: list[tuple[str, int]]) -> bytes:
    body = struct.pack(">H", packet_id)
    for pattern, qos in filters:
        body += _utf8_field(pattern) + bytes([qos])
    return _packet(SUBSCRIBE, 0x02, body)


def encode_pingreq() -> bytes:
    return _packet(PINGREQ, 0, b"")


def encode_disconnect() -> bytes:
    return _packet(DISCONNECT, 0, b"")


@dataclass(frozen=True)
class PublishPacket:
    topic: str
    payload: bytes
    qos: int
    packet_id: int | None
    dup: bool


def decode_publish(flags: int, body: bytes) -> PublishPacket:
    if len(body) < 2:
        raise DecodeError("publish body too short")
    (tlen,) = struct.unpack_from(">H", body, 0)
    if 2 + tlen > len(body):
        raise DecodeError("publish topic overruns body")
    topic = body[2 : 2 + tlen].decode("utf-8")
    qos = (flags >> 1) & 0x03
    pos = 2 + tlen
    packet_id = None
    if qos > 0:
        if pos + 2 > len(body):
            raise DecodeError("publish missing packet id")
        (packet_id,) = struct.unpack_from(">H", body, pos)
        pos += 2
    return PublishPacket(topic, body[pos:], qos, packet_id, bool(flags & 0x08))


class StreamDecoder:
    """Incremental splitter of a byte stream into (type, flags, body) packets."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[tuple[int, int, bytes]]:
        self._buf.extend(data)
        packets = []
        while True:
            if len(self._buf) < 2:
                return packets
            first = self._buf[0]
            try:
                length, consumed = decode_remaining_length(self._buf, 1)
            except DecodeError:
                if len(self._buf) >= 5:
                    raise  # genuinely malformed, not just short
                return packets
            total = 1 + consumed + length
            if len(self._buf) < total:
                return packets
            body = bytes(self._buf[1 + consumed : total])
            del self._buf[:total]
            packets.append((first >> 4, first & 0x0F, body))


# ---------------------------------------------------------------------------
# Client
# ---------------------------------------------------------------------------


def parse_broker_url(url: str) -> tuple[str, int]:
    parsed = urlparse(url)
    if parsed.scheme != "mqtt" or not parsed.hostname:
        raise MqttError(f"expected mqtt://host[:port], got {url!r}")
    return parsed.hostname, parsed.port or 1883


class MqttClient:
    """Threaded MQTT 3.1.1 client with local wildcard dispatch.

    Outgoing QoS 1 publishes are retried until PUBACK (at-least-once);
    subscription handlers run on the reader thread.
    """

    RETRY_INTERVAL_S = 2.0

    def __init__(self, broker_url: str, client_id: str | None = None, keepalive_s: int = 30):
        self.host, self.port = parse_broker_url(broker_url)
        self.client_id = client_id or f"aquafeed-{uuid.uuid4().hex[:12]}"
        self.keepalive_s = keepalive_s
        self._sock: socket.socket | None = None
        self._decoder = StreamDecoder()
        self._subs: list[tuple[str, MessageHandler]] = []
        self._pending: dict[int, bytes] = {}  # packet id -> publish bytes awaiting PUBACK
        self._next_packet_id = 1
        self._lock = threading.RLock()
        self._connected = threading.Event()
        self._closing = False
        self._reader: threading.Thread | None = None
        self._pinger: threading.Thread | None = None

    def connect(self, timeout_s: float = 10.0) -> None:
        try:
            self._sock = socket.create_connection((self.host, self.port), timeout=timeout_s)
        except OSError as exc:
            raise MqttError(f"cannot reach broker at {self.host}:{self.port}: {exc}") from None
        self._sock.settimeout(timeout_s)
        self._send(encode_connect(self.client_id, self.keepalive_s))
        ptype, _, body = self._read_packet_blocking()
        if ptype != CONNACK or len(body) != 2:
            raise MqttError(f"expected CONNACK, got packet type {ptype}")
        if body[1] != 0:
            raise MqttError(f"broker refused connection: {CONNACK_CODES.get(body[1], body[1])}")
        self._sock.settimeout(0.5)
        self._connected.set()
        self._reader = threading.Thread(target=self._read_loop, daemon=True, name="mqtt-reader")
        self._reader.start()
        self._pinger = threading.Thread(target=self._ping_loop, daemon=True, name="mqtt-pinger")
        self._pinger.start()
        logger.info("connected to mqtt broker %s:%s as %s", self.host, self.port, self.client_id)

    def publish(self, topic: str, payload: bytes, qos: int = 0) -> None:
        if qos == 0:
            self._send(encode_publish(topic, payload, qos=0))
            return
        with self._lock:
            packet_id = self._next_packet_id
            self._next_packet_id = self._next_packet_id % 65535 + 1
            packet = encode_publish(topic, payload, qos=1, packet_id=packet_id)
            self._pending[packet_id] = encode_publish(
                topic, payload, qos=1, packet_id=packet_id, dup=True
            )
        self._send(packet)

    def subscribe(self, pattern: str, handler: MessageHandler, qos: int = 1) -> tuple:
        handle = (pattern, handler)
        with self._lock:
            self._subs.append(handle)
            packet_id = self._next_packet_id
            self._next_packet_id = self._next_packet_id % 65535 + 1
        self._send(encode_subscribe(packet_id, [(pattern, qos)]))
        return handle

    def unsubscribe(self, handle: tuple) -> None:
        with self._lock:
            if handle in self._subs:
                self._subs.remove(handle)

    def close(self) -> None:
        self._closing = True
        try:
            if self._sock is not None:
                self._send(encode_disconnect())
                self._sock.close()
        except OSError:
            pass
        self._connected.clear()

    # -- internals -----------------------------------------------------------

    def _send(self, data: bytes) -> None:
        if self._sock is None:
            raise MqttError("not connected")
        with self._lock:
            try:
                self._sock.sendall(data)
            except OSError as exc:
                if not self._closing:
                    raise MqttError(f"send failed: {exc}") from None

    def _read_packet_blocking(self) -> tuple[int, int, bytes]:
        while True:
            data = self._sock.recv(4096)
            if not data:
                raise MqttError("broker closed the connection during handshake")
            packets = self._decoder.feed(data)
            if packets:
                return packets[0]

    def _read_loop(self) -> None:
        while not self._closing:
            try:
                data = self._sock.recv(4096)
            except socket.timeout:
                continue
            except OSError:
                break
            if not data:
                break
            try:
                packets = self._decoder.feed(data)
            except DecodeError:
                logger.exception("malformed packet from broker; closing")
                break
            for ptype, flags, body in packets:
                self._handle_packet(ptype, flags, body)
        self._connected.clear()
        if not self._closing:
            logger.warning("mqtt connection lost")

    def _handle_packet(self, ptype: int, flags: int, body: bytes) -> None:
        if ptype == PUBLISH:
            try:
                pkt = decode_publish(flags, body)
            except DecodeError:
                logger.exception("undecodable publish from broker")
                return
            if pkt.qos == 1 and pkt.packet_id is not None:
                self._send(encode_puback(pkt.packet_id))
            with self._lock:
                targets = [h for p, h in self._subs if topic_matches(p, pkt.topic)]
            for handler in targets:
                try:
                    handler(pkt.topic, pkt.payload)
                except Exception:
                    logger.exception("subscriber failed on topic %s", pkt.topic)
        elif ptype == PUBACK and len(body) >= 2:
            (packet_id,) = struct.unpack_from(">H", body, 0)
            with self._lock:
                self._pending.pop(packet_id, None)
        # CONNACK/SUBACK/PINGRESP carry nothing we need to act on here

    def _ping_loop(self) -> None:
        interval = max(self.keepalive_s / 2.0, 1.0)
        last_retry = time.monotonic()
        while not self._closing and self._connected.is_set():
            time.sleep(interval)
            if self._closing or not self._connected.is_set():
                return
            try:
                self._send(encode_pingreq())
                now = time.monotonic()
                if now - last_retry >= self.RETRY_INTERVAL_S:
                    last_retry = now
                    with self._lock:
                        unacked = list(self._pending.values())
                    for packet in unacked:
                        self._send(packet)
            except MqttError:
                return
