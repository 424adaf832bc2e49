"""Message transport: MQTT-style topic matching and an in-process bus.

The in-process bus gives desk-scale runs (tests, embedded simulator) the same
publish/subscribe surface as a real broker connection, with synchronous
dispatch for determinism. `aquafeed.mqtt.MqttClient` provides the same surface
over a real MQTT 3.1.1 broker.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from typing import Callable, Protocol

from .errors import InvalidInputError

logger = logging.getLogger(__name__)

MessageHandler = Callable[[str, bytes], None]


def topic_matches(pattern: str, topic: str) -> bool:
    """MQTT 3.1.1 filter matching: `+` matches one level, `#` the rest."""
    p_parts = pattern.split("/")
    t_parts = topic.split("/")
    for i, p in enumerate(p_parts):
        if p == "#":
            return i == len(p_parts) - 1
        if i >= len(t_parts):
            return False
        if p != "+" and p != t_parts[i]:
            return False
    return len(p_parts) == len(t_parts)


class MessageBus(Protocol):
    def publish(self, topic: str, payload: bytes, qos: int = 0) -> None: ...

    def subscribe(self, pattern: str, handler: MessageHandler) -> object: ...

    def unsubscribe(self, handle: object) -> None: ...

    def close(self) -> None: ...


@dataclass
class _Subscription:
    pattern: str
    handler: MessageHandler


class LocalBus:
    """In-process bus with synchronous, in-order dispatch.

    Handlers run inline on the publisher's thread; a handler may itself
    publish (the nested dispatch completes before the outer publish returns).
    Handler exceptions are logged and do not disturb other subscribers.
    """

    def __init__(self, name: str = "local"):
        self.name = name
        self._subs: list[_Subscription] = []
        self._lock = threading.RLock()
        self._closed = False

    def publish(self, topic: str, payload: bytes, qos: int = 0) -> None:
        # in-process delivery is always exactly-once; qos only matters over MQTT
        if self._closed:
            raise InvalidInputError("bus", "bus is closed")
        with self._lock:
            targets = [s for s in self._subs if topic_matches(s.pattern, topic)]
        for sub in targets:
            try:
                sub.handler(topic, payload)
            except Exception:
                logger.exception("subscriber %r failed on topic %s", sub.pattern, topic)

    def subscribe(self, pattern: str, handler: MessageHandler) -> _Subscription:
        sub = _Subscription(pattern, handler)
        with self._lock:
            self._subs.append(sub)
        return sub

    def unsubscribe(self, handle: _Subscription) -> None:
        with self._lock:
            if handle in self._subs:
                self._subs.remove(handle)

    def close(self) -> None:
        self._closed = True
        with self._lock:
            self._subs.clear()


_named_buses: dict[str, LocalBus] = {}
_named_lock = threading.Lock()


def connect_bus(broker_url: str) -> MessageBus:
    """Open a bus for a broker URL.

    `local:<name>` shares a named in-process bus within this process;
    `mqtt://host[:port]` connects to a real broker.
    """
    if broker_url.startswith("local:"):
        name = broker_url[len("local:") :] or "default"
        with _named_lock:
            bus = _named_buses.get(name)
            if bus is None or bus._closed:
                bus = LocalBus(name)
                _named_buses[name] = bus
            return bus
    if broker_url.startswith("mqtt://"):
        from .mqtt import MqttClient

        client = MqttClient(broker_url)
        client.connect()
        return client
    raise InvalidInputError(
        "broker_url", f"unsupported scheme in {broker_url!r} (use local:<name> or mqtt://host:port)"
    )
