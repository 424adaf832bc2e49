"""Operator and developer entry points.

serve     run the control service (optionally with an embedded virtual tank)
simulate  run a virtual tank against a broker
compute   one-shot offline ration report from detection + depth files
replay    reconstruct tank state from an event log
"""

from __future__ import annotations

import json
import logging
import signal
import threading
import time
from pathlib import Path

import click

from . import __version__
from .bus import connect_bus
from .compute import compute_ration, load_band_table, load_intrinsics
from .config import ENV_BROKER_URL, ENV_CONFIG, load_serve_config
from .control import (
    ClosedLoopRunner,
    ControlService,
    TankController,
    TankRuntime,
    read_event_log,
    recover_fold,
)
from .errors import AquafeedError
from .telemetry.store import SeriesStore

logger = logging.getLogger(__name__)

FORMATS = click.Choice(["text", "machine"])


def _fail(message: str) -> "click.ClickException":
    return click.ClickException(message)


def _parse_speed(value: str | None) -> float | None:
    if value is None or value == "max":
        return None
    try:
        speed = float(value)
    except ValueError:
        raise _fail(f"--speed must be a number or 'max', got {value!r}")
    if speed <= 0:
        raise _fail("--speed must be > 0")
    return speed


@click.group()
@click.version_option(__version__)
def main():
    """Precision-feeding control plane for tilapia tanks."""
    logging.basicConfig(
        level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )


@main.command()
@click.option("--config", "config_path", type=click.Path(), envvar=ENV_CONFIG,
              help="Control config JSON (or AQUA_CONFIG).")
@click.option("--broker-url", envvar=ENV_BROKER_URL,
              help="mqtt://host:port or local:<name> (or AQUA_BROKER_URL).")
@click.option("--host", default=None, help="API bind host (overrides config).")
@click.option("--port", default=None, type=int, help="API bind port (overrides config).")
@click.option("--scenario", "scenario_path", type=click.Path(exists=True),
              help="Embed a virtual tank from this scenario (shares an in-process bus).")
@click.option("--seed", type=int, default=None, help="Override the embedded scenario seed.")
@click.option("--speed", default="max", show_default=True,
              help="Embedded-sim clock multiplier (sim seconds per wall second) or 'max'.")
@click.option("--duration-s", type=float, default=0.0, show_default=True,
              help="Stop after this much simulated time (embedded sim only; 0 = run forever).")
@click.option("--no-api", is_flag=True, help="Run the control loop without the HTTP API.")
@click.option("--static-dir", type=click.Path(), default="frontend/dist",
              help="Dashboard build to serve at / (ignored when missing).")
@click.option("--format", "fmt", type=FORMATS, default="text", show_default=True)
def serve(config_path, broker_url, host, port, scenario_path, seed, speed, duration_s,
          no_api, static_dir, fmt):
    """Run the control service: decisions, actuation, event log, HTTP API."""
    from .api import create_app

    speed_val = _parse_speed(speed)
    try:
        config = load_serve_config(config_path, broker_override=broker_url)
    except AquafeedError as exc:
        raise _fail(str(exc))
    if no_api and not scenario_path:
        raise _fail("--no-api requires --scenario (nothing would drive the loop)")
    if duration_s and not scenario_path:
        raise _fail("--duration-s only applies to an embedded simulator")

    try:
        bus = connect_bus(config.broker_url)
    except AquafeedError as exc:
        raise _fail(f"broker unreachable: {exc}")

    store = SeriesStore()
    snapshot_path = config.store_snapshot_path
    if snapshot_path and Path(snapshot_path).exists():
        store = SeriesStore.load(snapshot_path)

    sim = None
    runner = None
    if scenario_path:
        from .tanksim import VirtualTank, load_scenario
        from dataclasses import replace as dc_replace

        scenario = load_scenario(scenario_path)
        if seed is not None:
            scenario = dc_replace(scenario, seed=seed)
        if scenario.tank_id != config.tank_id:
            raise _fail(
                f"scenario tank {scenario.tank_id!r} != config tank {config.tank_id!r}"
            )
        sim = VirtualTank(scenario, bus=bus)
        clock = lambda: sim.now_ms  # controller follows simulated time
    else:
        clock = lambda: int(time.time() * 1000)

    controller = TankController(
        config.tank_id, config.controller, store, config.log_path, clock, bus=bus
    )
    service = ControlService()
    runtime = TankRuntime(config.tank_id, controller, store, sim=sim)
    service.add_tank(runtime)

    if sim is not None:
        runner = ClosedLoopRunner(sim, controller)
        runtime.runner = runner

    def shutdown(*_args):
        service.close()
        if snapshot_path:
            store.save(snapshot_path)

    if no_api:
        assert runner is not None
        target_s = duration_s if duration_s > 0 else float("inf")
        started = time.monotonic()
        try:
            runner.run_for(target_s if target_s != float("inf") else 2**40, speed=speed_val)
        except KeyboardInterrupt:
            pass
        finally:
            shutdown()
        summary = {
            "tank_id": config.tank_id,
            "sim_now_ms": sim.now_ms,
            "decisions": len(controller.fold.decisions),
            "completed_feedings": sum(
                1 for d in controller.fold.decisions.values()
                if d.outcome is not None and d.outcome.status == "completed"
            ),
            "mean_weight_g": sim.mean_weight_g,
            "hopper_g": sim.hopper_g,
            "wall_seconds": round(time.monotonic() - started, 3),
        }
        if fmt == "machine":
            click.echo(json.dumps(summary, sort_keys=True))
        else:
            for key, value in summary.items():
                click.echo(f"{key}: {value}")
        return

    if runner is not None:
        thread = threading.Thread(
            target=runner.run_for,
            args=(duration_s if duration_s > 0 else 2**40,),
            kwargs={"speed": speed_val},
            daemon=True,
            name="sim-runner",
        )
        runtime.runner_thread = thread
        thread.start()

    import uvicorn

    app = create_app(service, static_dir=static_dir)
    click.echo(f"control API on http://{config.api_host}:{config.api_port} "
               f"(tank {config.tank_id}, broker {config.broker_url})")
    try:
        uvicorn.run(app, host=config.api_host, port=config.api_port, log_level="warning")
    finally:
        shutdown()


@main.command()
@click.option("--scenario", "scenario_path", type=click.Path(exists=True), required=True)
@click.option("--broker-url", envvar=ENV_BROKER_URL, default="local:default", show_default=True)
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--speed", default="max", show_default=True,
              help="Clock multiplier (sim seconds per wall second) or 'max'.")
@click.option("--duration-s", type=float, default=3600.0, show_default=True,
              help="Simulated duration (0 = run until interrupted).")
@click.option("--tick-s", type=float, default=60.0, show_default=True)
@click.option("--emit-log", type=click.Path(), default=None,
              help="Append every published message as a JSON line (for determinism checks).")
@click.option("--format", "fmt", type=FORMATS, default="text", show_default=True)
def simulate(scenario_path, broker_url, seed, speed, duration_s, tick_s, emit_log, fmt):
    """Run a virtual tank publishing telemetry/frames and executing commands."""
    from .tanksim import VirtualTank, load_scenario
    from dataclasses import replace as dc_replace

    speed_val = _parse_speed(speed)
    try:
        scenario = load_scenario(scenario_path)
        if seed is not None:
            scenario = dc_replace(scenario, seed=seed)
        bus = connect_bus(broker_url)
    except AquafeedError as exc:
        raise _fail(str(exc))

    sim = VirtualTank(scenario, bus=bus)
    log_fh = open(emit_log, "a", encoding="utf-8") if emit_log else None
    end_ms = sim.now_ms + int(duration_s * 1000) if duration_s > 0 else None
    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    emitted = 0
    try:
        while not stop.is_set() and (end_ms is None or sim.now_ms < end_ms):
            started = time.monotonic()
            dt = tick_s if end_ms is None else min(tick_s, (end_ms - sim.now_ms) / 1000.0)
            for topic, payload in sim.step(dt):
                emitted += 1
                if log_fh:
                    log_fh.write(
                        json.dumps(
                            {"ts_ms": sim.now_ms, "topic": topic,
                             "payload": payload.decode("utf-8")},
                            sort_keys=True,
                        )
                        + "\n"
                    )
            if speed_val is not None:
                budget = dt / speed_val - (time.monotonic() - started)
                if budget > 0:
                    time.sleep(budget)
    finally:
        if log_fh:
            log_fh.close()
    if fmt == "machine":
        click.echo(json.dumps({
            "tank_id": scenario.tank_id,
            "sim_now_ms": sim.now_ms,
            "published": emitted,
            "mean_weight_g": sim.mean_weight_g,
            "hopper_g": sim.hopper_g,
        }, sort_keys=True))
    else:
        click.echo(
            f"simulated to t={sim.now_ms} ms, published {emitted} messages, "
            f"mean weight {sim.mean_weight_g:.3f} g, hopper {sim.hopper_g:.1f} g"
        )


@main.command()
@click.option("--detections-a", type=click.Path(), required=True)
@click.option("--detections-b", type=click.Path(), required=True)
@click.option("--depth-a", type=click.Path(), required=True)
@click.option("--depth-b", type=click.Path(), required=True)
@click.option("--intrinsics", "intrinsics_path", type=click.Path(), required=True)
@click.option("--table", "table_path", type=click.Path(), default=None,
              help="Feeding band table JSON (defaults to the tilapia table).")
@click.option("--method", type=click.Choice(["world-euclidean", "eq3-literal"]),
              default="world-euclidean", show_default=True)
@click.option("--format", "fmt", type=FORMATS, default="text", show_default=True)
def compute(detections_a, detections_b, depth_a, depth_b, intrinsics_path, table_path,
            method, fmt):
    """Offline ration report from a dual-camera detection + depth file set."""
    from .biometrics import DEFAULT_FEEDING_TABLE

    try:
        cam = load_intrinsics(intrinsics_path)
        table = load_band_table(table_path) if table_path else DEFAULT_FEEDING_TABLE
        report = compute_ration(
            detections_a, detections_b, depth_a, depth_b, cam, table, method=method
        )
    except AquafeedError as exc:
        raise _fail(str(exc))
    if fmt == "machine":
        click.echo(json.dumps(report.to_dict(), sort_keys=True))
    else:
        click.echo(report.to_text())


@main.command()
@click.argument("log_path", type=click.Path(exists=True))
@click.option("--format", "fmt", type=FORMATS, default="text", show_default=True)
def replay(log_path, fmt):
    """Reconstruct tank state and decision history from an event log."""
    try:
        events, corruption = read_event_log(log_path)
    except AquafeedError as exc:
        raise _fail(str(exc))
    tank_id = "unknown"
    for event in events:
        tank = event.data.get("tank_id") or event.data.get("state", {}).get("tank_id")
        if tank:
            tank_id = tank
            break
    fold, last_seq, corruption = recover_fold(log_path, tank_id)
    if corruption is not None:
        click.echo(
            f"warning: log corrupt after seq {corruption.last_good_seq} "
            f"at byte {corruption.byte_offset} ({corruption.reason}); partial state follows",
            err=True,
        )
    if fmt == "machine":
        click.echo(
            json.dumps(
                {
                    "state": fold.state.to_dict(),
                    "decisions": [d.to_dict() for d in fold.decisions.values()],
                    "last_seq": last_seq,
                    "corruption": corruption.reason if corruption else None,
                },
                sort_keys=True,
            )
        )
    else:
        click.echo(f"tank: {fold.state.tank_id}")
        click.echo(f"events applied through seq {last_seq}")
        click.echo(f"decisions: {len(fold.decisions)}")
        for d in fold.decisions.values():
            outcome = d.outcome.status if d.outcome else "unresolved"
            click.echo(
                f"  #{d.decision_id} {d.trigger} at t={d.ts_ms} ms: "
                f"{d.grams_commanded:.3f} g -> {outcome}"
            )
        readings = fold.state.latest_readings
        for kind in sorted(readings):
            r = readings[kind]
            click.echo(f"latest {kind}: {r.value:g} {r.unit} at t={r.ts_ms} ms")
        for kind, alert in sorted(fold.state.alerts.items()):
            click.echo(f"active alert {kind}: {alert.message}")


if __name__ == "__main__":
    main()
