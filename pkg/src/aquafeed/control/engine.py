"""Per-tank decision engine.

One serialized loop per tank: bus handlers, the schedule tick, and API calls
all funnel through a reentrant lock. Every state change is an event appended
to the log and applied through the fold, so recovery replays to the exact
live state.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from ..biometrics import (
    DEFAULT_FEEDING_TABLE,
    METHOD_WORLD_EUCLIDEAN,
    BiometricCoefficients,
    CameraIntrinsics,
    DepthMap,
    FeedingBandTable,
    RationPlan,
    build_ration_plan,
    weight_from_length,
)
from ..detections import (
    FrameDetections,
    FusedObservation,
    fuse_dual_camera,
    measure_frame,
    single_camera_observation,
)
from ..errors import AquafeedError, InvalidInputError
from ..telemetry.codec import cmd_topic, encode_payload
from ..telemetry.messages import AckMessage, CommandMessage, TelemetryReading
from ..telemetry.store import IngestResult, SeriesStore
from .eventlog import EventLogWriter, recover_fold
from .events import Event, StateFold
from .state import Alert, AlertRule, FeedDecision, default_rules
from .state import observation_to_dict, plan_to_dict

logger = logging.getLogger(__name__)

DAY_MS = 24 * 3600 * 1000


class FeedCapExceededError(AquafeedError):
    """A feed command would exceed the per-feeding safety cap."""


@dataclass(frozen=True)
class ControllerConfig:
    """Tunable behavior of the decision engine.

    The depth/focal fields describe the camera rig the controller assumes
    when lifting frame keypoints to lengths (one constant-depth viewing plane
    per tank, matching the camera installation).
    """

    windows_per_day: int = 3
    window_phase_ms: int | None = None  # first window offset after start; None = one interval
    staleness_ms: int = 600_000
    cap_fraction_of_biomass: float = 0.05
    ph_burst_s: float = 5.0
    actuation_cooldown_ms: int = 300_000
    pairing_tolerance_ms: int = 500
    ack_timeout_ms: int = 60_000
    focal_px: float = 500.0
    depth_m: float = 2.0
    length_method: str = METHOD_WORLD_EUCLIDEAN
    coefficients: BiometricCoefficients = field(default_factory=BiometricCoefficients)
    table: FeedingBandTable = DEFAULT_FEEDING_TABLE
    snapshot_interval: int = 500
    rules: dict[str, AlertRule] = field(default_factory=default_rules)

    def __post_init__(self):
        if self.windows_per_day < 1:
            raise InvalidInputError("windows_per_day", "must be >= 1")
        if self.staleness_ms < 0:
            raise InvalidInputError("staleness_ms", "must be >= 0")
        if not (0 < self.cap_fraction_of_biomass <= 1):
            raise InvalidInputError("cap_fraction_of_biomass", "must be in (0, 1]")
        if self.ph_burst_s <= 0:
            raise InvalidInputError("ph_burst_s", "must be > 0")

    @property
    def window_interval_ms(self) -> int:
        return DAY_MS // self.windows_per_day


class TankController:
    """Event-driven controller for one tank."""

    def __init__(
        self,
        tank_id: str,
        config: ControllerConfig,
        store: SeriesStore,
        log_path: str | Path,
        clock: Callable[[], int],
        bus=None,
        on_event: Callable[[Event], None] | None = None,
    ):
        self.tank_id = tank_id
        self.config = config
        self.store = store
        self.clock = clock
        self.on_event = on_event
        self._lock = threading.RLock()
        self._bus = None
        self._depth = DepthMap.constant(416, 416, config.depth_m)
        self._cam = CameraIntrinsics(focal_px=config.focal_px)

        resumed = Path(log_path).exists() and Path(log_path).stat().st_size > len(b"AQLG")
        if resumed:
            self.fold, last_seq, corruption = recover_fold(log_path, tank_id)
            self._seq = (last_seq or 0) + 1
            if corruption:
                logger.warning(
                    "event log corruption after seq %s at byte %s: %s",
                    corruption.last_good_seq,
                    corruption.byte_offset,
                    corruption.reason,
                )
        else:
            self.fold = StateFold(tank_id)
            self._seq = 1
        self.log = EventLogWriter(log_path, snapshot_interval=config.snapshot_interval)

        start = clock()
        phase = config.window_phase_ms
        self._next_window_ms = start + (phase if phase is not None else config.window_interval_ms)
        self._window_due = False
        self._pending_frame: FrameDetections | None = None
        self._pending_manual: list[str] = []
        self._manual_results: dict[str, dict] = {}
        # counters continue after recovery so command ids never collide
        self._feed_counter = len(self.fold.decisions)
        self._ph_counter = self.fold.ph_command_count
        self._acked_commands: set[str] = set()
        self._last_ph_actuation_ms: int | None = None
        # commands awaiting a terminal ack: command_id -> (kind, issued ts).
        # Rebuilt for feed decisions after recovery; ph bursts are not (their
        # issue times are not part of the replayable state).
        self._awaiting_ack: dict[str, tuple[str, int]] = {
            d.command_id: ("feed", d.ts_ms)
            for d in self.fold.decisions.values()
            if d.outcome is None
        }
        self.recent_events: list[Event] = []  # bounded ring for the API
        self._recent_cap = 2000

        if not resumed:
            for kind in sorted(config.rules):
                self._record("rule_updated", config.rules[kind].to_dict(), start)
        if bus is not None:
            self.attach(bus)

    # -- wiring ----------------------------------------------------------------

    def attach(self, bus) -> None:
        from ..telemetry.codec import decode_payload

        self._bus = bus

        def dispatch(topic: str, payload: bytes) -> None:
            try:
                msg = decode_payload(topic, payload)
            except AquafeedError as exc:
                logger.warning("dropping undecodable message on %s: %s", topic, exc)
                return
            if isinstance(msg, TelemetryReading):
                self.handle_telemetry(msg)
            elif isinstance(msg, FrameDetections):
                self.handle_frame(msg)
            elif isinstance(msg, AckMessage):
                self.handle_ack(msg)

        for pattern in ("telemetry/+", "frames/+", "ack/+"):
            bus.subscribe(f"aqua/{self.tank_id}/{pattern}", dispatch)

    def close(self) -> None:
        with self._lock:
            self.log.close()

    # -- event plumbing ----------------------------------------------------------

    def _record(self, kind: str, data: dict, ts_ms: int | None = None) -> Event:
        event = Event(self._seq, self.clock() if ts_ms is None else ts_ms, kind, data)
        self._seq += 1
        self.log.append(event)
        self.fold.apply(event)
        self.recent_events.append(event)
        if len(self.recent_events) > self._recent_cap:
            del self.recent_events[: self._recent_cap // 2]
        snap = self.log.maybe_snapshot(self.fold, self._seq, event.ts_ms)
        if snap is not None:
            self._seq += 1
        if self.on_event is not None:
            try:
                self.on_event(event)
            except Exception:
                logger.exception("event listener failed")
        return event

    @property
    def state(self):
        return self.fold.state

    def state_dict(self) -> dict:
        with self._lock:
            return self.fold.state.to_dict()

    def decisions_page(self, offset: int = 0, limit: int = 50) -> list[dict]:
        with self._lock:
            ordered = [self.fold.decisions[k] for k in sorted(self.fold.decisions)]
            page = ordered[::-1][offset : offset + limit]  # newest first
            return [d.to_dict() for d in page]

    def events_page(self, after_seq: int = 0, limit: int = 100) -> list[dict]:
        with self._lock:
            out = [e.to_dict() for e in self.recent_events if e.seq > after_seq]
            return out[:limit]

    # -- telemetry path ----------------------------------------------------------

    def handle_telemetry(self, reading: TelemetryReading) -> None:
        with self._lock:
            result = self.store.ingest(reading)
            if result is not IngestResult.STORED:
                return  # duplicate or too old: dropped by ingestion
            self._record("telemetry", reading.to_dict(), reading.ts_ms)
            self._evaluate_rules(reading)

    def _evaluate_rules(self, reading: TelemetryReading) -> None:
        rule = self.fold.state.rules.get(reading.kind)
        if rule is None:
            return
        value = reading.value
        active = reading.kind in self.fold.state.alerts
        if rule.out_of_band(value):
            if not active:
                alert = Alert(
                    reading.kind,
                    reading.ts_ms,
                    value,
                    f"{reading.kind} {value:g} outside [{rule.low:g}, {rule.high:g}]",
                )
                self._record("alert_raised", alert.to_dict(), reading.ts_ms)
            if rule.action == "actuate_ph" and reading.kind == "ph":
                self._actuate_ph(value, rule, reading.ts_ms)
        elif active and rule.safely_inside(value):
            self._record(
                "alert_cleared", {"kind": reading.kind, "value": value}, reading.ts_ms
            )

    def _actuate_ph(self, value: float, rule: AlertRule, ts_ms: int) -> None:
        last = self._last_ph_actuation_ms
        if last is not None and ts_ms - last < self.config.actuation_cooldown_ms:
            return
        self._last_ph_actuation_ms = ts_ms
        self._ph_counter += 1
        command_id = f"{self.tank_id}-ph-{self._ph_counter:06d}"
        direction = "raise" if value < rule.low else "lower"
        self._awaiting_ack[command_id] = ("ph_pump", ts_ms)
        self._record(
            "ph_command",
            {
                "command_id": command_id,
                "direction": direction,
                "seconds": self.config.ph_burst_s,
                "value": value,
            },
            ts_ms,
        )
        self._publish_command(
            CommandMessage(
                self.tank_id,
                command_id,
                "ph_pump",
                ts_ms,
                direction=direction,
                seconds=self.config.ph_burst_s,
            )
        )

    def _publish_command(self, cmd: CommandMessage) -> None:
        if self._bus is not None:
            # commands are at-least-once; executors dedup by command_id
            self._bus.publish(cmd_topic(self.tank_id, cmd.kind), encode_payload(cmd), qos=1)
        else:
            logger.info("no bus attached; command %s not sent", cmd.command_id)

    # -- frame path ----------------------------------------------------------------

    def handle_frame(self, fd: FrameDetections) -> None:
        with self._lock:
            pending = self._pending_frame
            if pending is None:
                self._pending_frame = fd
                return
            if pending.camera_id == fd.camera_id:
                # partner never arrived; degrade the stale frame, keep the new one
                self._process_single(pending)
                self._pending_frame = fd
                return
            a, b = (pending, fd) if pending.camera_id == "A" else (fd, pending)
            if abs(a.frame_ts_ms - b.frame_ts_ms) > self.config.pairing_tolerance_ms:
                older, newer = (
                    (pending, fd) if pending.frame_ts_ms <= fd.frame_ts_ms else (fd, pending)
                )
                self._process_single(older)
                self._pending_frame = newer
                return
            self._pending_frame = None
            self._process_pair(a, b)

    def _measure(self, fd: FrameDetections):
        return measure_frame(
            fd, self._depth, self._cam, self.config.coefficients, self.config.length_method
        )

    def _process_pair(self, a: FrameDetections, b: FrameDetections) -> None:
        lengths_a, _, skipped_a = self._measure(a)
        lengths_b, _, skipped_b = self._measure(b)
        obs = fuse_dual_camera(
            a,
            b,
            pairing_tolerance_ms=self.config.pairing_tolerance_ms,
            lengths_a=lengths_a,
            lengths_b=lengths_b,
        )
        self._handle_observation(obs, len(skipped_a) + len(skipped_b))

    def _process_single(self, fd: FrameDetections) -> None:
        lengths, _, skipped = self._measure(fd)
        self._handle_observation(single_camera_observation(fd, lengths), len(skipped))

    def _handle_observation(self, obs: FusedObservation, skipped: int = 0) -> None:
        plan = None
        if obs.lengths_cm:
            weights = [weight_from_length(l, self.config.coefficients) for l in obs.lengths_cm]
            plan = build_ration_plan(weights, obs.fused_count, self.config.table)
        self._record(
            "observation",
            {
                "observation": observation_to_dict(obs),
                "plan": plan_to_dict(plan) if plan else None,
                "skipped": skipped,
            },
            obs.frame_ts_ms,
        )
        if obs.fused_count == 0:
            self._record("note", {"text": "no fish detected"}, obs.frame_ts_ms)
            return
        if plan is None:
            return
        try:
            if self._pending_manual:
                command_id = self._pending_manual.pop(0)
                self._issue_feed(plan, obs, "manual", 1.0, obs.frame_ts_ms, command_id)
            elif self._window_due:
                self._window_due = False
                self._issue_feed(
                    plan, obs, "scheduled", 1.0 / self.config.windows_per_day, obs.frame_ts_ms
                )
        except (FeedCapExceededError, InvalidInputError):
            pass  # already recorded as a note event; the loop keeps running

    def _cap_grams(self, plan: RationPlan) -> float:
        measured = [p.weight_g for p in plan.per_fish]
        biomass_estimate = plan.fish_count * (sum(measured) / len(measured))
        return self.config.cap_fraction_of_biomass * biomass_estimate

    def _issue_feed(
        self,
        plan: RationPlan,
        obs: FusedObservation,
        trigger: str,
        fraction: float,
        ts_ms: int,
        command_id: str | None = None,
    ) -> FeedDecision:
        grams = plan.total_grams_per_day * fraction
        cap = self._cap_grams(plan)
        if not (grams > 0 and math.isfinite(grams)):
            self._record("note", {"text": f"feed skipped: non-positive ration {grams}"}, ts_ms)
            raise InvalidInputError("grams", f"ration came out non-positive: {grams}")
        if grams > cap * (1 + 1e-9):
            self._record(
                "note",
                {"text": f"feed blocked: {grams:.3f} g exceeds safety cap {cap:.3f} g"},
                ts_ms,
            )
            raise FeedCapExceededError(
                f"{grams:.3f} g exceeds the per-feeding cap {cap:.3f} g "
                f"({self.config.cap_fraction_of_biomass:.0%} of estimated biomass)"
            )
        self._feed_counter += 1
        if command_id is None:
            command_id = f"{self.tank_id}-feed-{self._feed_counter:06d}"
        decision = FeedDecision(
            decision_id=len(self.fold.decisions) + 1,
            trigger=trigger,
            ts_ms=ts_ms,
            observation=obs,
            plan=plan,
            command_id=command_id,
            grams_commanded=grams,
            window_fraction=fraction,
            degraded=obs.degraded,
        )
        self._awaiting_ack[command_id] = ("feed", ts_ms)
        self._record("decision", decision.to_dict(), ts_ms)
        if trigger == "manual":
            self._manual_results[command_id] = {
                "status": "issued",
                "command_id": command_id,
                "decision_id": decision.decision_id,
            }
        self._publish_command(
            CommandMessage(self.tank_id, command_id, "feed", ts_ms, grams=grams)
        )
        return self.fold.decisions[decision.decision_id]

    # -- acks ------------------------------------------------------------------------

    def handle_ack(self, ack: AckMessage) -> None:
        with self._lock:
            if ack.command_id in self._acked_commands:
                return  # duplicate terminal ack; one outcome per command
            decision = self.fold.decision_for_command(ack.command_id)
            if decision is not None and decision.outcome is not None:
                return  # already resolved (possibly by timeout)
            if ack.status in ("completed", "failed"):
                self._acked_commands.add(ack.command_id)
                self._awaiting_ack.pop(ack.command_id, None)
            self._record("ack", ack.to_dict())

    # -- schedule and manual triggers ---------------------------------------------

    def on_tick(self, now_ms: int) -> None:
        """Advance the feeding schedule and expire unanswered commands.

        A due window feeds on the next frame pair. A command with no terminal
        ack within the timeout gets a timeout event as its single outcome;
        any ack straggling in afterwards is dropped."""
        with self._lock:
            while now_ms >= self._next_window_ms:
                self._window_due = True
                self._next_window_ms += self.config.window_interval_ms
            expired = [
                (cid, kind)
                for cid, (kind, issued) in self._awaiting_ack.items()
                if now_ms - issued >= self.config.ack_timeout_ms
            ]
            for command_id, kind in expired:
                del self._awaiting_ack[command_id]
                self._acked_commands.add(command_id)
                self._record("ack_timeout", {"command_id": command_id, "kind": kind}, now_ms)

    def request_manual_feed(self, command_id: str | None = None) -> dict:
        """Trigger a feeding now: immediately from a fresh cached plan, or on
        the next frame pair otherwise. Idempotent per command_id."""
        with self._lock:
            now = self.clock()
            if command_id is None:
                command_id = f"{self.tank_id}-manual-{now}-{self._feed_counter + 1}"
            if command_id in self._manual_results:
                return dict(self._manual_results[command_id])
            state = self.fold.state
            fresh = (
                state.last_plan is not None
                and state.last_plan_ts_ms is not None
                and now - state.last_plan_ts_ms <= self.config.staleness_ms
                and state.last_plan.fish_count > 0
                and state.last_observation is not None
            )
            self._record("manual_requested", {"command_id": command_id}, now)
            if fresh:
                decision = self._issue_feed(
                    state.last_plan, state.last_observation, "manual", 1.0, now, command_id
                )
                result = {
                    "status": "issued",
                    "command_id": command_id,
                    "decision_id": decision.decision_id,
                }
            else:
                self._pending_manual.append(command_id)
                result = {"status": "pending", "command_id": command_id}
            self._manual_results[command_id] = result
            return dict(result)

    def update_rule(self, rule: AlertRule) -> None:
        with self._lock:
            self._record("rule_updated", rule.to_dict())
