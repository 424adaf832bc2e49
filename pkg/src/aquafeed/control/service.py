"""Multi-tank registry behind the HTTP API, plus the state-delta stream hub."""

from __future__ import annotations

import logging
import queue
import threading
from dataclasses import dataclass

from ..errors import AquafeedError, InvalidInputError
from ..telemetry.store import SeriesStore
from .engine import TankController
from .events import Event
from .runner import ClosedLoopRunner

logger = logging.getLogger(__name__)


class UnknownTankError(AquafeedError):
    pass


class StreamHub:
    """Fan-out of state-delta events to per-subscriber queues.

    Slow subscribers lose oldest deltas rather than blocking the decision loop.
    """

    def __init__(self, maxsize: int = 1000):
        self.maxsize = maxsize
        self._subs: dict[str, list[queue.Queue]] = {}
        self._lock = threading.Lock()

    def subscribe(self, tank_id: str) -> queue.Queue:
        q = queue.Queue(maxsize=self.maxsize)
        with self._lock:
            self._subs.setdefault(tank_id, []).append(q)
        return q

    def unsubscribe(self, tank_id: str, q: queue.Queue) -> None:
        with self._lock:
            subs = self._subs.get(tank_id, [])
            if q in subs:
                subs.remove(q)

    def emit(self, tank_id: str, delta: dict) -> None:
        with self._lock:
            subs = list(self._subs.get(tank_id, []))
        for q in subs:
            try:
                q.put_nowait(delta)
            except queue.Full:
                try:
                    q.get_nowait()
                    q.put_nowait(delta)
                except queue.Empty:
                    pass


@dataclass
class TankRuntime:
    """Everything the API needs for one tank."""

    tank_id: str
    controller: TankController
    store: SeriesStore
    sim: object | None = None
    runner: ClosedLoopRunner | None = None
    runner_thread: threading.Thread | None = None


class ControlService:
    def __init__(self):
        self.tanks: dict[str, TankRuntime] = {}
        self.hub = StreamHub()

    def add_tank(self, runtime: TankRuntime) -> None:
        if runtime.tank_id in self.tanks:
            raise InvalidInputError("tank_id", f"tank {runtime.tank_id!r} already registered")
        self.tanks[runtime.tank_id] = runtime
        controller = runtime.controller
        previous = controller.on_event

        def forward(event: Event, _prev=previous, _tank=runtime.tank_id) -> None:
            if _prev is not None:
                _prev(event)
            self.hub.emit(_tank, {"seq": event.seq, "ts_ms": event.ts_ms,
                                  "kind": event.kind, "data": event.data})

        controller.on_event = forward

    def get(self, tank_id: str) -> TankRuntime:
        runtime = self.tanks.get(tank_id)
        if runtime is None:
            raise UnknownTankError(f"unknown tank {tank_id!r}")
        return runtime

    def tank_ids(self) -> list[str]:
        return sorted(self.tanks)

    def close(self) -> None:
        for runtime in self.tanks.values():
            if runtime.runner is not None:
                runtime.runner.stop.set()
            if runtime.runner_thread is not None and runtime.runner_thread.is_alive():
                runtime.runner_thread.join(timeout=5.0)
            runtime.controller.close()

    # -- scenario control (simulator-backed tanks only) ------------------------

    def scenario_control(self, tank_id: str, action: str, speed: float | None = None) -> dict:
        runtime = self.get(tank_id)
        if runtime.runner is None:
            raise InvalidInputError("tank_id", f"tank {tank_id!r} has no attached simulator")
        runner = runtime.runner
        if action == "pause":
            runner.pause.set()
        elif action == "resume":
            runner.pause.clear()
        elif action == "set_speed":
            if speed is None or speed <= 0:
                raise InvalidInputError("speed", "set_speed needs speed > 0")
            runner.speed = speed
        else:
            raise InvalidInputError("action", f"unknown scenario action {action!r}")
        return {
            "paused": runner.pause.is_set(),
            "speed": runner.speed,
            "sim_now_ms": runtime.sim.now_ms if runtime.sim is not None else None,
        }
