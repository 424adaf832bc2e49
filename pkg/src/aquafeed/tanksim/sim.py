"""The virtual tank: stands in for the MCU, sensors, cameras, fish, and pumps.

Single-owner and stepped sequentially; everything it emits is a function of
(seed, scenario, command trace). Commands may arrive re-entrantly while a step
is publishing (the in-process bus dispatches inline); execution happens at the
current simulated time.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..biometrics import PixelKeypoint, length_from_weight
from ..detections import RESIZE_STANDARD, GroundTruthFish, stub_detect
from ..errors import InvalidInputError
from ..telemetry.codec import ack_topic, cmd_topic, encode_payload, frames_topic, telemetry_topic
from ..telemetry.messages import AckMessage, CommandMessage, TelemetryReading
from .scenario import Scenario

logger = logging.getLogger(__name__)

DAY_MS = 24 * 3600 * 1000

Emission = tuple[str, bytes]


@dataclass
class FishIndividual:
    """One simulated fish; weight and length stay consistent via the inverse
    of the length-weight relation."""

    id: int
    weight_g: float
    length_cm: float

    def grow(self, feed_g: float, fcr: float) -> None:
        if feed_g < 0:
            raise InvalidInputError("feed_g", "must be >= 0")
        self.weight_g += feed_g / fcr
        self.length_cm = length_from_weight(self.weight_g)


class _SensorState:
    def __init__(self, spec, start_ms: int):
        self.spec = spec
        self.true_value = spec.baseline
        self.last_update_ms = start_ms
        self.next_emit_ms = start_ms + int(spec.interval_s * 1000)
        self.seq = 0

    def advance_to(self, ts_ms: int) -> None:
        if ts_ms <= self.last_update_ms:
            return
        hours = (ts_ms - self.last_update_ms) / 3_600_000.0
        self.true_value += self.spec.drift_per_hour * hours
        self.true_value = min(max(self.true_value, self.spec.low), self.spec.high)
        self.last_update_ms = ts_ms


class VirtualTank:
    """Deterministic tank simulator with a simulated millisecond clock."""

    def __init__(self, scenario: Scenario, bus=None):
        self.scenario = scenario
        self.rng = np.random.default_rng(scenario.seed)
        self.now_ms = scenario.start_ts_ms
        self.fish = [
            FishIndividual(i, scenario.initial_weight_g, length_from_weight(scenario.initial_weight_g))
            for i in range(scenario.population)
        ]
        self.sensors = {
            kind: _SensorState(spec, scenario.start_ts_ms)
            for kind, spec in sorted(scenario.sensors.items())
        }
        self._hopper_initial_g = scenario.feeder.hopper_g
        self.gates_open = False
        self.fed_today_g = 0.0  # true dispensed mass, consumed by today's growth
        self.total_dispensed_g = 0.0
        self.day_index = 0
        self._next_day_ms = scenario.start_ts_ms + DAY_MS
        self._next_frame_ms = scenario.start_ts_ms + int(scenario.frame_interval_s * 1000)
        self._executed: dict[str, AckMessage] = {}
        self._bus = None
        self._frame_seq = 0
        if bus is not None:
            self.attach(bus)

    # -- wiring ---------------------------------------------------------------

    def attach(self, bus) -> None:
        """Subscribe to this tank's command topics on a bus."""
        self._bus = bus
        bus.subscribe(cmd_topic(self.scenario.tank_id, "+"), self._on_command_bytes)

    def _on_command_bytes(self, topic: str, payload: bytes) -> None:
        from ..telemetry.codec import decode_payload

        try:
            cmd = decode_payload(topic, payload)
        except Exception:
            logger.exception("undecodable command on %s", topic)
            return
        self.handle_command(cmd)

    def _emit(
        self, topic: str, payload: bytes, out: list[Emission] | None = None, qos: int = 0
    ) -> None:
        if out is not None:
            out.append((topic, payload))
        if self._bus is not None:
            self._bus.publish(topic, payload, qos=qos)

    # -- stepping -------------------------------------------------------------

    def step(self, dt_s: float) -> list[Emission]:
        """Advance simulated time, emitting everything that falls due.

        Due events are processed in (time, kind) order: growth, then
        telemetry, then frames. Returns the emissions in order.
        """
        if dt_s <= 0:
            raise InvalidInputError("dt_s", f"must be > 0, got {dt_s}")
        end_ms = self.now_ms + int(round(dt_s * 1000))
        out: list[Emission] = []
        while True:
            due = [(self._next_day_ms, 0, "growth")]
            for kind, st in self.sensors.items():
                due.append((st.next_emit_ms, 1, kind))
            due.append((self._next_frame_ms, 2, "frames"))
            when, _, what = min(due)
            if when > end_ms:
                break
            self.now_ms = when
            if what == "growth":
                self._apply_daily_growth()
            elif what == "frames":
                self._emit_frames(out)
                self._next_frame_ms += int(self.scenario.frame_interval_s * 1000)
            else:
                self._emit_telemetry(self.sensors[what], out)
        self.now_ms = end_ms
        return out

    def _emit_telemetry(self, st: _SensorState, out: list[Emission]) -> None:
        st.advance_to(self.now_ms)
        value = st.true_value
        if st.spec.noise_std > 0:
            value += self.rng.normal(0.0, st.spec.noise_std)
        value = min(max(value, st.spec.low), st.spec.high)
        st.seq += 1
        reading = TelemetryReading.make(
            self.scenario.tank_id,
            f"{st.spec.kind}-sensor",
            self.now_ms,
            st.seq,
            st.spec.kind,
            value,
        )
        self._emit(telemetry_topic(reading.tank_id, reading.kind), encode_payload(reading), out)
        st.next_emit_ms += int(st.spec.interval_s * 1000)

    def _emit_frames(self, out: list[Emission]) -> None:
        self._frame_seq += 1
        for camera_id in self.scenario.camera_ids:
            truth = [self._place_fish(f) for f in self.fish]
            fd = stub_detect(
                truth,
                self.scenario.detector,
                self.rng,
                camera_id,
                self.now_ms,
            )
            self._emit(
                frames_topic(self.scenario.tank_id, camera_id), encode_payload(fd), out
            )

    def _place_fish(self, fish: FishIndividual) -> GroundTruthFish:
        """Random placement in the camera view; the orthogonal second camera
        gets an independent draw. Pixel extent follows from the pinhole model
        at the configured viewing depth."""
        px_len = fish.length_cm / 100.0 * self.scenario.focal_px / self.scenario.depth_m
        margin = min(px_len / 2.0 + 4.0 * self.scenario.detector.keypoint_noise_px + 2.0, 200.0)
        cx = self.rng.uniform(margin, RESIZE_STANDARD - margin)
        cy = self.rng.uniform(margin, RESIZE_STANDARD - margin)
        theta = self.rng.uniform(0.0, 2.0 * math.pi)
        ux, uy = math.cos(theta), math.sin(theta)
        half = px_len / 2.0
        girth = px_len * 0.2
        hi = np.nextafter(float(RESIZE_STANDARD), 0.0)

        def clamp(v):
            return min(max(v, 0.0), hi)

        def kp(label, dx, dy):
            return PixelKeypoint(clamp(cx + dx), clamp(cy + dy), label)

        return GroundTruthFish(
            fish_id=fish.id,
            keypoints=(
                kp("mouth", ux * half, uy * half),
                kp("peduncle", -ux * half, -uy * half),
                kp("belly", -uy * girth, ux * girth),
                kp("back", uy * girth, -ux * girth),
            ),
        )

    def _apply_daily_growth(self) -> None:
        if self.fish and self.fed_today_g > 0:
            share = self.fed_today_g / len(self.fish)
            for fish in self.fish:
                fish.grow(share, self.scenario.feed_conversion_ratio)
        self.fed_today_g = 0.0
        self.day_index += 1
        self._next_day_ms += DAY_MS

    # -- actuation ------------------------------------------------------------

    def handle_command(self, cmd: CommandMessage) -> AckMessage:
        """Execute a command, once: retries with a known command_id get the
        cached ack republished (at-least-once delivery made safe)."""
        cached = self._executed.get(cmd.command_id)
        if cached is not None:
            self._emit(ack_topic(cmd.tank_id, cmd.command_id), encode_payload(cached), qos=1)
            return cached
        if cmd.kind == "feed":
            ack = self.execute_feed(cmd.grams, cmd.command_id)
        else:
            ack = self.execute_ph_pump(cmd.direction, cmd.seconds, cmd.command_id)
        return ack

    def execute_feed(self, grams_target: float, command_id: str) -> AckMessage:
        """Open the gates and dispense until the load cell reads the target.

        Noiseless load cell: the continuous limit, dispensed == target exactly
        (hopper permitting). Noisy: the control loop is simulated in quanta of
        rate * control_period, re-reading the cell each quantum.
        """
        if not (grams_target > 0 and math.isfinite(grams_target)):
            raise InvalidInputError("grams_target", f"must be > 0, got {grams_target}")
        feeder = self.scenario.feeder
        available = self.hopper_g
        self.gates_open = True
        if feeder.load_cell_noise_std == 0:
            dispensed = min(grams_target, available)
            reading = dispensed
        else:
            quantum = min(feeder.dispense_rate_g_per_s * feeder.control_period_s, feeder.tolerance_g)
            dispensed = 0.0
            reading = 0.0
            while reading < grams_target and available - dispensed > 0:
                dispensed += min(quantum, available - dispensed)
                reading = dispensed + self.rng.normal(0.0, feeder.load_cell_noise_std)
        self.total_dispensed_g += dispensed
        self.fed_today_g += dispensed
        self.gates_open = False
        duration_s = dispensed / feeder.dispense_rate_g_per_s

        if reading < grams_target:  # ran dry before reaching the target
            ack = AckMessage(
                self.scenario.tank_id,
                command_id,
                "feed",
                "failed",
                detail="hopper-empty",
                measured=reading,
            )
        else:
            ack = AckMessage(
                self.scenario.tank_id,
                command_id,
                "feed",
                "completed",
                detail=f"dispensed in {duration_s:.3f}s",
                measured=reading,
            )
        self._executed[command_id] = ack
        self._emit(ack_topic(ack.tank_id, ack.command_id), encode_payload(ack), qos=1)
        return ack

    def execute_ph_pump(self, direction: str, seconds: float, command_id: str) -> AckMessage:
        if direction not in ("raise", "lower"):
            raise InvalidInputError("direction", f"must be raise or lower, got {direction!r}")
        if not (seconds > 0 and math.isfinite(seconds)):
            raise InvalidInputError("seconds", f"must be > 0, got {seconds}")
        sensor = self.sensors.get("ph")
        if sensor is not None:
            sensor.advance_to(self.now_ms)
            delta = self.scenario.ph_pump_rate_ph_per_s * seconds
            shifted = sensor.true_value + (delta if direction == "raise" else -delta)
            sensor.true_value = min(max(shifted, sensor.spec.low), sensor.spec.high)
        ack = AckMessage(
            self.scenario.tank_id,
            command_id,
            "ph_pump",
            "completed",
            detail=f"{direction} for {seconds:g}s",
        )
        self._executed[command_id] = ack
        self._emit(ack_topic(ack.tank_id, ack.command_id), encode_payload(ack), qos=1)
        return ack

    # -- introspection for tests and the API ----------------------------------

    @property
    def hopper_g(self) -> float:
        """Remaining hopper mass, derived so that initial - hopper equals the
        dispensed total bit-for-bit (exact mass conservation)."""
        return self._hopper_initial_g - self.total_dispensed_g

    @property
    def mean_weight_g(self) -> float:
        if not self.fish:
            return 0.0
        return sum(f.weight_g for f in self.fish) / len(self.fish)

    @property
    def biomass_g(self) -> float:
        return sum(f.weight_g for f in self.fish)
