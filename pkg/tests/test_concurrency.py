"""Concurrent use: API readers and manual triggers against a running loop.

The decision loop is serialized per tank; API reads take consistent
snapshots. This hammers both from several threads while the closed loop
runs unthrottled and then checks the invariants that matter: no exceptions
anywhere, one outcome per decision, and internally consistent snapshots.
"""

import json
import threading

from aquafeed.bus import LocalBus
from aquafeed.control import (
    ClosedLoopRunner,
    ControllerConfig,
    ControlService,
    TankController,
    TankRuntime,
)
from aquafeed.control.engine import FeedCapExceededError
from aquafeed.tanksim import Scenario, VirtualTank
from aquafeed.telemetry import SeriesStore


def test_api_reads_and_feeds_during_live_loop(tmp_path):
    bus = LocalBus()
    scenario = Scenario(
        tank_id="t1",
        seed=11,
        population=20,
        frame_interval_s=600.0,
        start_ts_ms=1_000,
    )
    sim = VirtualTank(scenario, bus=bus)
    store = SeriesStore()
    controller = TankController(
        "t1",
        ControllerConfig(windows_per_day=3, window_phase_ms=3_600_000, staleness_ms=3_600_000),
        store,
        tmp_path / "t1.aqlg",
        lambda: sim.now_ms,
        bus=bus,
    )
    service = ControlService()
    service.add_tank(TankRuntime("t1", controller, store, sim=sim))
    runner = ClosedLoopRunner(sim, controller, tick_s=60.0)

    errors: list[BaseException] = []
    stop = threading.Event()

    def guard(fn):
        def run():
            try:
                while not stop.is_set():
                    fn()
            except BaseException as exc:  # noqa: BLE001 - the test wants everything
                errors.append(exc)

        return run

    def read_state():
        snapshot = controller.state_dict()
        json.dumps(snapshot)  # must always be serializable
        decision = snapshot["last_decision"]
        if decision is not None:
            assert decision["grams_commanded"] > 0

    def read_decisions():
        for d in controller.decisions_page(0, 50):
            outcomes = d["outcome"]
            assert outcomes is None or outcomes["status"] in ("accepted", "completed", "failed")

    def read_series():
        store.query_range("t1", "ph", 0, 2**62)

    presses = []

    def press_feed():
        # a realistic operator: occasional presses, not a firehose (an
        # unthrottled loop legitimately drains the hopper dry)
        if len(presses) < 40:
            try:
                result = controller.request_manual_feed()
                presses.append(result)
            except FeedCapExceededError:
                pass
        threading.Event().wait(0.05)

    loop_thread = threading.Thread(
        target=runner.run_for, args=(3 * 86_400,), kwargs={"speed": None}, daemon=True
    )
    loop_thread.start()
    readers = [threading.Thread(target=guard(fn), daemon=True)
               for fn in (read_state, read_decisions, read_series, press_feed)]
    for t in readers:
        t.start()
    loop_thread.join(timeout=120)
    stop.set()
    for t in readers:
        t.join(timeout=10)

    assert not loop_thread.is_alive(), "closed loop failed to finish in time"
    assert errors == [], f"concurrent access raised: {errors[:3]}"

    # every decision carries at most one outcome, scheduled ones exactly one
    decisions = list(controller.fold.decisions.values())
    assert len(decisions) >= 9  # 3 days x 3 windows, plus manual presses
    for d in decisions:
        if d.trigger == "scheduled":
            assert d.outcome is not None and d.outcome.status == "completed"
    # manual presses each resolved to a distinct command
    issued_ids = [p["command_id"] for p in presses]
    assert len(issued_ids) == len(set(issued_ids))
