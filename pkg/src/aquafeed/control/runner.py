"""Co-simulation driver: steps a virtual tank and the controller on one clock.

The simulator and controller share a bus (normally in-process); the runner
advances simulated time in fixed ticks. With an in-process bus every message
is handled inline during the step, so a whole run is a deterministic function
of (scenario seed, controller config).
"""

from __future__ import annotations

import threading
import time
from typing import Callable

from ..errors import InvalidInputError
from ..tanksim.sim import VirtualTank
from .engine import TankController


class ClosedLoopRunner:
    def __init__(self, sim: VirtualTank, controller: TankController, tick_s: float = 60.0):
        if tick_s <= 0:
            raise InvalidInputError("tick_s", "must be > 0")
        self.sim = sim
        self.controller = controller
        self.tick_s = tick_s
        self.pause = threading.Event()
        self.stop = threading.Event()
        self.speed: float | None = None  # sim seconds per wall second; None = unthrottled

    def run_for(
        self,
        sim_seconds: float,
        speed: float | None = None,
        on_tick: Callable[[int], None] | None = None,
    ) -> None:
        """Advance the loop by a simulated duration.

        ``speed`` is the clock multiplier (sim seconds per wall second);
        None runs unthrottled.
        """
        if sim_seconds <= 0:
            raise InvalidInputError("sim_seconds", "must be > 0")
        self.speed = speed
        end_ms = self.sim.now_ms + int(sim_seconds * 1000)
        while self.sim.now_ms < end_ms and not self.stop.is_set():
            if self.pause.is_set():
                time.sleep(0.01)
                continue
            started = time.monotonic()
            dt = min(self.tick_s, (end_ms - self.sim.now_ms) / 1000.0)
            self.sim.step(dt)
            self.controller.on_tick(self.sim.now_ms)
            if on_tick is not None:
                on_tick(self.sim.now_ms)
            if self.speed is not None and self.speed > 0:
                budget = dt / self.speed
                remaining = budget - (time.monotonic() - started)
                if remaining > 0:
                    time.sleep(remaining)
