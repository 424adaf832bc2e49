"""Decision engine: pipeline, scheduling, alerts, acks, manual feeds, recovery."""

import random

import pytest

from aquafeed.biometrics import PixelKeypoint
from aquafeed.bus import LocalBus
from aquafeed.control import (
    AlertRule,
    ControllerConfig,
    FeedCapExceededError,
    TankController,
    recover_fold,
)
from aquafeed.detections import FishKeypointSet, FrameDetections
from aquafeed.tanksim import Scenario, VirtualTank
from aquafeed.telemetry import SeriesStore, TelemetryReading
from aquafeed.telemetry.codec import decode_payload


class FakeClock:
    def __init__(self, now_ms=1_000):
        self.now_ms = now_ms

    def __call__(self):
        return self.now_ms

    def advance(self, ms):
        self.now_ms += ms
        return self.now_ms


def ten_cm_fish(fish_id=0):
    """Keypoints 25 px apart: 10 cm at depth 2 m with f=500 -> 14.66 g."""
    return FishKeypointSet(
        fish_id,
        (
            PixelKeypoint(100.0, 100.0, "mouth"),
            PixelKeypoint(115.0, 120.0, "peduncle"),
            PixelKeypoint(103.5, 113.0, "belly"),
            PixelKeypoint(111.5, 107.0, "back"),
        ),
        0.97,
    )


def frame(camera_id, ts, count, fish=()):
    return FrameDetections(camera_id, ts, 416, 416, count, tuple(fish))


def make_controller(tmp_path, clock, bus=None, **config_overrides):
    config = ControllerConfig(**config_overrides)
    store = SeriesStore()
    return TankController(
        "t1", config, store, tmp_path / "t1.aqlg", clock, bus=bus
    )


@pytest.fixture
def commands_bus():
    """LocalBus that records every command it carries."""
    bus = LocalBus()
    sent = []
    bus.subscribe("aqua/t1/cmd/+", lambda t, p: sent.append(decode_payload(t, p)))
    return bus, sent


def test_worked_pipeline_example(tmp_path, commands_bus):
    bus, sent = commands_bus
    clock = FakeClock()
    ctl = make_controller(tmp_path, clock, bus=bus, windows_per_day=1)
    ctl.on_tick(clock.advance(25 * 3600 * 1000))  # one window overdue
    ctl.handle_frame(frame("A", clock.now_ms, 12, [ten_cm_fish()]))
    ctl.handle_frame(frame("B", clock.now_ms + 100, 13))
    assert len(sent) == 1
    assert sent[0].kind == "feed"
    assert sent[0].grams == pytest.approx(9.529, abs=1e-3)  # 13 x 0.733
    decision = ctl.state.last_decision
    assert decision.trigger == "scheduled"
    assert decision.observation.fused_count == 13
    assert decision.observation.source_counts == (12, 13)
    assert decision.grams_commanded == pytest.approx(
        decision.plan.total_grams_per_day * decision.window_fraction, rel=1e-12
    )


def test_window_splitting_three_per_day(tmp_path, commands_bus):
    bus, sent = commands_bus
    clock = FakeClock()
    ctl = make_controller(tmp_path, clock, bus=bus, windows_per_day=3)
    ctl.on_tick(clock.advance(9 * 3600 * 1000))
    ctl.handle_frame(frame("A", clock.now_ms, 13, [ten_cm_fish()]))
    ctl.handle_frame(frame("B", clock.now_ms, 13))
    assert len(sent) == 1
    assert sent[0].grams == pytest.approx(13 * 0.73299 / 3, abs=1e-3)


def test_zero_fish_no_command(tmp_path, commands_bus):
    bus, sent = commands_bus
    clock = FakeClock()
    ctl = make_controller(tmp_path, clock, bus=bus)
    ctl.on_tick(clock.advance(9 * 3600 * 1000))
    ctl.handle_frame(frame("A", clock.now_ms, 0))
    ctl.handle_frame(frame("B", clock.now_ms, 0))
    assert sent == []
    assert any(
        e.kind == "note" and e.data["text"] == "no fish detected" for e in ctl.recent_events
    )


def test_observation_recorded_without_due_window(tmp_path, commands_bus):
    bus, sent = commands_bus
    clock = FakeClock()
    ctl = make_controller(tmp_path, clock, bus=bus)
    ctl.handle_frame(frame("A", clock.now_ms, 5, [ten_cm_fish()]))
    ctl.handle_frame(frame("B", clock.now_ms, 6))
    assert sent == []
    assert ctl.state.last_observation.fused_count == 6
    assert ctl.state.last_plan is not None


def test_unpaired_frames_degraded_single_path(tmp_path, commands_bus):
    bus, sent = commands_bus
    clock = FakeClock()
    ctl = make_controller(tmp_path, clock, bus=bus, pairing_tolerance_ms=500)
    ctl.handle_frame(frame("A", 1_000, 4, [ten_cm_fish()]))
    ctl.handle_frame(frame("B", 2_000, 6))  # 1000 ms apart: unpaired
    # the older A frame was processed singly and flagged degraded
    assert ctl.state.last_observation.degraded
    assert ctl.state.last_observation.source_counts == (4, 0)
    # the B frame is still pending; a matching A frame pairs with it
    ctl.handle_frame(frame("A", 2_100, 5, [ten_cm_fish()]))
    assert not ctl.state.last_observation.degraded
    assert ctl.state.last_observation.fused_count == 6  # mean(5, 6) half-up


def test_same_camera_twice_degrades_older(tmp_path, commands_bus):
    bus, _ = commands_bus
    clock = FakeClock()
    ctl = make_controller(tmp_path, clock, bus=bus)
    ctl.handle_frame(frame("A", 1_000, 3, [ten_cm_fish()]))
    ctl.handle_frame(frame("A", 1_200, 4, [ten_cm_fish()]))
    assert ctl.state.last_observation.degraded
    assert ctl.state.last_observation.fused_count == 3


def test_ph_alert_and_pump_command(tmp_path, commands_bus):
    bus, sent = commands_bus
    clock = FakeClock()
    ctl = make_controller(tmp_path, clock, bus=bus)

    ctl.handle_telemetry(TelemetryReading.make("t1", "ph-sensor", 5_000, 1, "ph", 7.0))
    assert sent == [] and ctl.state.alerts == {}

    ctl.handle_telemetry(TelemetryReading.make("t1", "ph-sensor", 10_000, 2, "ph", 6.0))
    assert "ph" in ctl.state.alerts
    assert len(sent) == 1
    assert sent[0].kind == "ph_pump" and sent[0].direction == "raise"
    assert sent[0].seconds == pytest.approx(5.0)


def test_ph_hysteresis_single_alert(tmp_path, commands_bus):
    bus, sent = commands_bus
    clock = FakeClock()
    ctl = make_controller(tmp_path, clock, bus=bus)
    seq = 0
    raised = []

    def push(value, ts):
        nonlocal seq
        seq += 1
        ctl.handle_telemetry(TelemetryReading.make("t1", "ph-sensor", ts, seq, "ph", value))
        raised.append("ph" in ctl.state.alerts)

    push(6.49, 10_000)   # below band: alert
    push(6.51, 20_000)   # inside band but within hysteresis: alert stays
    push(6.49, 30_000)
    push(6.51, 40_000)
    assert all(raised)
    alert_events = [e for e in ctl.recent_events if e.kind == "alert_raised"]
    assert len(alert_events) == 1  # one alert through the oscillation
    push(6.80, 50_000)   # past low + hysteresis 0.2: clears
    assert "ph" not in ctl.state.alerts


def test_ph_actuation_cooldown(tmp_path, commands_bus):
    bus, sent = commands_bus
    clock = FakeClock()
    ctl = make_controller(tmp_path, clock, bus=bus, actuation_cooldown_ms=300_000)
    for i, ts in enumerate([10_000, 20_000, 400_000], start=1):
        ctl.handle_telemetry(TelemetryReading.make("t1", "ph-sensor", ts, i, "ph", 6.0))
    # first triggers, second inside cooldown, third after cooldown
    assert len([c for c in sent if c.kind == "ph_pump"]) == 2


def test_do_alert_notify_only(tmp_path, commands_bus):
    bus, sent = commands_bus
    clock = FakeClock()
    ctl = make_controller(tmp_path, clock, bus=bus)
    ctl.handle_telemetry(
        TelemetryReading.make("t1", "do-sensor", 10_000, 1, "dissolved_oxygen", 3.0)
    )
    assert "dissolved_oxygen" in ctl.state.alerts
    assert sent == []  # notify action does not actuate


def test_duplicate_telemetry_dropped(tmp_path, commands_bus):
    bus, _ = commands_bus
    clock = FakeClock()
    ctl = make_controller(tmp_path, clock, bus=bus)
    r = TelemetryReading.make("t1", "ph-sensor", 10_000, 1, "ph", 7.0)
    ctl.handle_telemetry(r)
    before = len(ctl.recent_events)
    ctl.handle_telemetry(r)  # replayed seq
    assert len(ctl.recent_events) == before


def test_closed_loop_ack_pairs_with_decision(tmp_path):
    bus = LocalBus()
    clock = FakeClock()
    sim = VirtualTank(Scenario(tank_id="t1", population=5, frame_interval_s=1e9), bus=bus)
    ctl = make_controller(tmp_path, clock, bus=bus, windows_per_day=1)
    ctl.on_tick(clock.advance(25 * 3600 * 1000))
    ctl.handle_frame(frame("A", clock.now_ms, 5, [ten_cm_fish()]))
    ctl.handle_frame(frame("B", clock.now_ms, 5))
    decision = ctl.state.last_decision
    assert decision.outcome is not None  # ack arrived inline through the bus
    assert decision.outcome.status == "completed"
    assert decision.outcome.measured == pytest.approx(decision.grams_commanded, abs=2.0)
    assert ctl.state.actuators["feed"]["last_status"] == "completed"


def test_duplicate_ack_single_outcome(tmp_path, commands_bus):
    bus, sent = commands_bus
    clock = FakeClock()
    ctl = make_controller(tmp_path, clock, bus=bus, windows_per_day=1)
    ctl.on_tick(clock.advance(25 * 3600 * 1000))
    ctl.handle_frame(frame("A", clock.now_ms, 5, [ten_cm_fish()]))
    ctl.handle_frame(frame("B", clock.now_ms, 5))
    decision = ctl.state.last_decision
    from aquafeed.telemetry.messages import AckMessage

    ack1 = AckMessage("t1", decision.command_id, "feed", "completed", "ok", measured=3.2)
    ack2 = AckMessage("t1", decision.command_id, "feed", "completed", "retry", measured=9.9)
    ctl.handle_ack(ack1)
    ctl.handle_ack(ack2)
    assert ctl.state.last_decision.outcome == ack1  # one outcome per decision


def test_unanswered_command_times_out_once(tmp_path, commands_bus):
    bus, sent = commands_bus  # nothing on this bus executes commands
    clock = FakeClock()
    ctl = make_controller(tmp_path, clock, bus=bus, windows_per_day=1, ack_timeout_ms=60_000)
    ctl.on_tick(clock.advance(25 * 3600 * 1000))
    ctl.handle_frame(frame("A", clock.now_ms, 5, [ten_cm_fish()]))
    ctl.handle_frame(frame("B", clock.now_ms, 5))
    decision = ctl.state.last_decision
    assert decision.outcome is None

    ctl.on_tick(clock.advance(30_000))  # not yet
    assert ctl.state.last_decision.outcome is None
    ctl.on_tick(clock.advance(31_000))  # past the timeout
    outcome = ctl.state.last_decision.outcome
    assert outcome is not None
    assert outcome.status == "failed" and outcome.detail == "ack-timeout"
    assert ctl.state.actuators["feed"]["last_status"] == "timeout"

    # a straggler ack after the timeout is dropped: still exactly one outcome
    from aquafeed.telemetry.messages import AckMessage

    ctl.handle_ack(AckMessage("t1", decision.command_id, "feed", "completed", "late", measured=3.0))
    assert ctl.state.last_decision.outcome.detail == "ack-timeout"


def test_manual_feed_uses_cached_plan(tmp_path, commands_bus):
    bus, sent = commands_bus
    clock = FakeClock()
    ctl = make_controller(tmp_path, clock, bus=bus, staleness_ms=600_000)
    ctl.handle_frame(frame("A", clock.now_ms, 13, [ten_cm_fish()]))
    ctl.handle_frame(frame("B", clock.now_ms, 13))
    cached_total = ctl.state.last_plan.total_grams_per_day
    clock.advance(60_000)  # within staleness
    result = ctl.request_manual_feed("op-click-1")
    assert result["status"] == "issued"
    assert sent[-1].kind == "feed"
    assert sent[-1].grams == pytest.approx(cached_total, rel=1e-12)
    assert ctl.state.last_decision.trigger == "manual"


def test_manual_feed_stale_plan_waits_for_frames(tmp_path, commands_bus):
    bus, sent = commands_bus
    clock = FakeClock()
    ctl = make_controller(tmp_path, clock, bus=bus, staleness_ms=600_000)
    ctl.handle_frame(frame("A", clock.now_ms, 13, [ten_cm_fish()]))
    ctl.handle_frame(frame("B", clock.now_ms, 13))
    clock.advance(700_000)  # past staleness
    result = ctl.request_manual_feed("op-click-2")
    assert result["status"] == "pending"
    assert all(c.kind != "feed" for c in sent)
    ctl.handle_frame(frame("A", clock.now_ms, 13, [ten_cm_fish()]))
    ctl.handle_frame(frame("B", clock.now_ms, 13))
    assert sent[-1].kind == "feed"
    assert ctl.state.last_decision.trigger == "manual"
    assert ctl.state.last_decision.command_id == "op-click-2"


def test_manual_feed_idempotent_by_command_id(tmp_path, commands_bus):
    bus, sent = commands_bus
    clock = FakeClock()
    ctl = make_controller(tmp_path, clock, bus=bus)
    ctl.handle_frame(frame("A", clock.now_ms, 13, [ten_cm_fish()]))
    ctl.handle_frame(frame("B", clock.now_ms, 13))
    first = ctl.request_manual_feed("double-click")
    second = ctl.request_manual_feed("double-click")
    assert first == second
    assert len([c for c in sent if c.kind == "feed"]) == 1


def test_manual_feed_cap_rejection(tmp_path, commands_bus):
    bus, sent = commands_bus
    clock = FakeClock()
    # tiny fish feed at 20%/day which is far above a 5% per-feeding cap
    tiny = FishKeypointSet(
        0,
        (
            PixelKeypoint(100.0, 100.0, "mouth"),
            PixelKeypoint(103.0, 104.0, "peduncle"),  # 5 px -> 2 cm -> 0.11 g
            PixelKeypoint(101.0, 103.0, "belly"),
            PixelKeypoint(102.0, 101.0, "back"),
        ),
        0.9,
    )
    ctl = make_controller(tmp_path, clock, bus=bus)
    ctl.handle_frame(frame("A", clock.now_ms, 10, [tiny]))
    ctl.handle_frame(frame("B", clock.now_ms, 10))
    with pytest.raises(FeedCapExceededError):
        ctl.request_manual_feed("too-much")
    assert all(c.kind != "feed" for c in sent)


def test_rule_update_applies_to_next_evaluation(tmp_path, commands_bus):
    bus, _ = commands_bus
    clock = FakeClock()
    ctl = make_controller(tmp_path, clock, bus=bus)
    ctl.handle_telemetry(TelemetryReading.make("t1", "t-sensor", 5_000, 1, "temperature", 31.0))
    assert "temperature" not in ctl.state.alerts  # no default temperature rule
    ctl.update_rule(AlertRule("temperature", 24.0, 30.0, hysteresis=0.5))
    ctl.handle_telemetry(TelemetryReading.make("t1", "t-sensor", 6_000, 2, "temperature", 31.0))
    assert "temperature" in ctl.state.alerts


def test_delivery_semantics_commands_qos1(tmp_path):
    """Telemetry rides at-most-once; commands and acks at-least-once."""

    class RecordingBus(LocalBus):
        def __init__(self):
            super().__init__()
            self.published = []

        def publish(self, topic, payload, qos=0):
            self.published.append((topic, qos))
            super().publish(topic, payload, qos)

    bus = RecordingBus()
    clock = FakeClock()
    sim = VirtualTank(
        Scenario(tank_id="t1", population=3, frame_interval_s=600.0), bus=bus
    )
    ctl = make_controller(tmp_path, clock, bus=bus, windows_per_day=1)
    ctl.on_tick(clock.advance(25 * 3600 * 1000))
    sim.step(601.0)  # emits telemetry + a frame pair -> decision -> command -> ack
    ctl.on_tick(sim.now_ms)
    qos_by_category = {}
    for topic, qos in bus.published:
        category = topic.split("/")[2]
        qos_by_category.setdefault(category, set()).add(qos)
    assert qos_by_category["telemetry"] == {0}
    assert qos_by_category["frames"] == {0}
    assert qos_by_category["cmd"] == {1}
    assert qos_by_category["ack"] == {1}


def test_recovery_matches_live_state(tmp_path):
    """Randomized event traces: replayed TankState equals the live one."""
    for trial in range(10):
        rng = random.Random(1000 + trial)
        bus = LocalBus()
        clock = FakeClock()
        sim = VirtualTank(
            Scenario(tank_id="t1", seed=trial, population=6, frame_interval_s=1e9), bus=bus
        )
        log_path = tmp_path / f"trace-{trial}.aqlg"
        config = ControllerConfig(windows_per_day=2, snapshot_interval=rng.choice([4, 50, 500]))
        ctl = TankController("t1", config, SeriesStore(), log_path, clock, bus=bus)
        seqs = {"ph": 0, "dissolved_oxygen": 0, "temperature": 0}
        for step in range(rng.randrange(20, 60)):
            clock.advance(rng.randrange(1_000, 3_600_000))
            roll = rng.random()
            if roll < 0.4:
                kind = rng.choice(list(seqs))
                seqs[kind] += 1
                value = {"ph": rng.uniform(5.5, 9.5), "dissolved_oxygen": rng.uniform(2, 9),
                         "temperature": rng.uniform(20, 35)}[kind]
                ctl.handle_telemetry(
                    TelemetryReading.make("t1", f"{kind}-sensor", clock.now_ms, seqs[kind], kind, value)
                )
            elif roll < 0.7:
                count = rng.randrange(0, 9)
                fish = [ten_cm_fish()] if count and rng.random() < 0.8 else []
                ctl.handle_frame(frame("A", clock.now_ms, count, fish))
                if rng.random() < 0.9:
                    ctl.handle_frame(frame("B", clock.now_ms + rng.randrange(0, 400),
                                           rng.randrange(0, 9)))
            elif roll < 0.85:
                ctl.on_tick(clock.now_ms)
            else:
                try:
                    ctl.request_manual_feed(f"manual-{trial}-{step}")
                except FeedCapExceededError:
                    pass
        live = ctl.state
        ctl.close()
        replayed, _, corruption = recover_fold(log_path, "t1")
        assert corruption is None
        assert replayed.state == live
        assert set(replayed.decisions) == set(ctl.fold.decisions)


def test_resume_continues_from_log(tmp_path):
    bus = LocalBus()
    clock = FakeClock()
    log_path = tmp_path / "resume.aqlg"
    ctl = make_controller(tmp_path, clock, bus=bus)
    ctl.handle_telemetry(TelemetryReading.make("t1", "ph-sensor", 5_000, 1, "ph", 7.1))
    ctl.handle_frame(frame("A", clock.now_ms, 3, [ten_cm_fish()]))
    ctl.handle_frame(frame("B", clock.now_ms, 3))
    live = ctl.state
    ctl.close()

    resumed = TankController(
        "t1", ControllerConfig(), SeriesStore(), tmp_path / "t1.aqlg", clock, bus=LocalBus()
    )
    assert resumed.state == live
    assert resumed._seq > 1
