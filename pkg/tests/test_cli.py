"""CLI behavior: flags, exit codes, machine output, determinism."""

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from aquafeed.cli import main

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture
def runner():
    return CliRunner()


def test_help_lists_subcommands(runner):
    result = runner.invoke(main, ["--help"])
    assert result.exit_code == 0
    for cmd in ("serve", "simulate", "compute", "replay"):
        assert cmd in result.output


@pytest.mark.parametrize("cmd", ["serve", "simulate", "compute", "replay"])
def test_subcommand_help(runner, cmd):
    result = runner.invoke(main, [cmd, "--help"])
    assert result.exit_code == 0


def compute_args(fmt="machine"):
    return [
        "compute",
        "--detections-a", str(FIXTURES / "detections_a.json"),
        "--detections-b", str(FIXTURES / "detections_b.json"),
        "--depth-a", str(FIXTURES / "depth_a.dpth"),
        "--depth-b", str(FIXTURES / "depth_b.dpth"),
        "--intrinsics", str(FIXTURES / "intrinsics.json"),
        "--format", fmt,
    ]


def test_compute_fixture_pair_machine(runner):
    result = runner.invoke(main, compute_args())
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert report["fused_count"] == 13
    assert report["source_counts"] == [12, 13]
    assert abs(report["total_grams_per_day"] - 9.529) < 1e-3
    assert len(report["fish"]) == 1
    assert abs(report["fish"][0]["length_cm"] - 10.0) < 1e-9


def test_compute_fixture_pair_text(runner):
    result = runner.invoke(main, compute_args(fmt="text"))
    assert result.exit_code == 0
    assert "total ration: 9.529 g/day" in result.output


def test_compute_empty_detections_no_fish(runner, tmp_path):
    empty_a = tmp_path / "a.json"
    empty_b = tmp_path / "b.json"
    empty_a.write_text(json.dumps({
        "camera_id": "A", "frame_ts_ms": 0, "image_width": 416, "image_height": 416,
        "count": 0, "fish": [],
    }))
    empty_b.write_text(json.dumps({
        "camera_id": "B", "frame_ts_ms": 0, "image_width": 416, "image_height": 416,
        "count": 0, "fish": [],
    }))
    args = [
        "compute",
        "--detections-a", str(empty_a), "--detections-b", str(empty_b),
        "--depth-a", str(FIXTURES / "depth_a.dpth"),
        "--depth-b", str(FIXTURES / "depth_b.dpth"),
        "--intrinsics", str(FIXTURES / "intrinsics.json"),
        "--format", "machine",
    ]
    result = runner.invoke(main, args)
    assert result.exit_code == 0
    assert json.loads(result.output)["total_grams_per_day"] == 0.0


def test_compute_corrupt_depth_names_offset(runner, tmp_path):
    bad = tmp_path / "bad.dpth"
    bad.write_bytes((FIXTURES / "depth_a.dpth").read_bytes()[:100])
    args = compute_args()
    args[args.index(str(FIXTURES / "depth_a.dpth"))] = str(bad)
    result = runner.invoke(main, args)
    assert result.exit_code != 0
    assert "bad.dpth" in result.output
    assert "byte" in result.output


def test_compute_missing_file_errors(runner):
    args = compute_args()
    args[args.index(str(FIXTURES / "detections_a.json"))] = "/nonexistent.json"
    result = runner.invoke(main, args)
    assert result.exit_code != 0
    assert "nonexistent" in result.output


def test_simulate_seed_repetition_identical_logs(runner, tmp_path):
    logs = []
    for name in ("one.jsonl", "two.jsonl"):
        log = tmp_path / name
        result = runner.invoke(main, [
            "simulate",
            "--scenario", str(FIXTURES / "scenario_default.json"),
            "--broker-url", f"local:{name}",
            "--duration-s", "3600",
            "--emit-log", str(log),
        ])
        assert result.exit_code == 0, result.output
        logs.append(log.read_bytes())
    assert logs[0] == logs[1]
    assert len(logs[0]) > 0


def test_simulate_seed_override_changes_log(runner, tmp_path):
    logs = []
    for seed in (1, 2):
        log = tmp_path / f"s{seed}.jsonl"
        result = runner.invoke(main, [
            "simulate",
            "--scenario", str(FIXTURES / "scenario_default.json"),
            "--broker-url", f"local:seed{seed}",
            "--duration-s", "3600",
            "--seed", str(seed),
            "--emit-log", str(log),
        ])
        assert result.exit_code == 0
        logs.append(log.read_bytes())
    assert logs[0] != logs[1]


def test_simulate_machine_format(runner):
    result = runner.invoke(main, [
        "simulate", "--scenario", str(FIXTURES / "scenario_default.json"),
        "--broker-url", "local:fmt-test", "--duration-s", "600", "--format", "machine",
    ])
    assert result.exit_code == 0
    summary = json.loads(result.output)
    assert summary["tank_id"] == "t1"
    assert summary["published"] > 0


def test_simulate_30_days_accelerated_under_60s(runner):
    import time

    started = time.monotonic()
    result = runner.invoke(main, [
        "simulate", "--scenario", str(FIXTURES / "scenario_closed_loop.json"),
        "--broker-url", "local:sim30", "--duration-s", str(30 * 86400),
        "--format", "machine",
    ])
    elapsed = time.monotonic() - started
    assert result.exit_code == 0
    assert elapsed < 60.0, f"30-day run took {elapsed:.1f}s"
    summary = json.loads(result.output)
    assert summary["sim_now_ms"] >= 30 * 86400 * 1000


def test_simulate_rejects_zero_speed(runner):
    result = runner.invoke(main, [
        "simulate", "--scenario", str(FIXTURES / "scenario_default.json"),
        "--speed", "0",
    ])
    assert result.exit_code != 0
    assert "--speed" in result.output


def test_serve_bad_broker_url_nonzero_exit(runner, tmp_path):
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({"tank_id": "t1", "log_path": str(tmp_path / "t.aqlg")}))
    result = runner.invoke(main, [
        "serve", "--config", str(config), "--broker-url", "mqtt://127.0.0.1:1",
    ])
    assert result.exit_code != 0
    assert "broker unreachable" in result.output


def test_serve_smoke_embedded_sim_produces_decision(runner, tmp_path):
    """serve+simulate closed loop: at least one feed decision lands quickly."""
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({
        "tank_id": "t1",
        "log_path": str(tmp_path / "t1.aqlg"),
        "controller": {"windows_per_day": 3, "window_phase_ms": 7200000},
    }))
    result = runner.invoke(main, [
        "serve",
        "--config", str(config),
        "--broker-url", "local:smoke",
        "--scenario", str(FIXTURES / "scenario_closed_loop.json"),
        "--no-api",
        "--duration-s", str(12 * 3600),  # half a simulated day
        "--format", "machine",
    ])
    assert result.exit_code == 0, result.output
    summary = json.loads(result.output)
    assert summary["decisions"] >= 1
    assert summary["completed_feedings"] == summary["decisions"]
    assert summary["hopper_g"] < 2000.0


def test_replay_round_trip_after_serve(runner, tmp_path):
    config = tmp_path / "cfg.json"
    log_path = tmp_path / "t1.aqlg"
    config.write_text(json.dumps({
        "tank_id": "t1",
        "log_path": str(log_path),
        "controller": {"windows_per_day": 3, "window_phase_ms": 7200000},
    }))
    serve_result = runner.invoke(main, [
        "serve", "--config", str(config), "--broker-url", "local:replay-test",
        "--scenario", str(FIXTURES / "scenario_closed_loop.json"),
        "--no-api", "--duration-s", str(12 * 3600), "--format", "machine",
    ])
    assert serve_result.exit_code == 0
    live = json.loads(serve_result.output)

    replay_result = runner.invoke(main, ["replay", str(log_path), "--format", "machine"])
    assert replay_result.exit_code == 0, replay_result.output
    recovered = json.loads(replay_result.output)
    assert recovered["state"]["tank_id"] == "t1"
    assert len(recovered["decisions"]) == live["decisions"]
    assert recovered["corruption"] is None


def test_replay_truncated_log_warns_with_partial_state(runner, tmp_path):
    config = tmp_path / "cfg.json"
    log_path = tmp_path / "t1.aqlg"
    config.write_text(json.dumps({"tank_id": "t1", "log_path": str(log_path)}))
    runner.invoke(main, [
        "serve", "--config", str(config), "--broker-url", "local:trunc-test",
        "--scenario", str(FIXTURES / "scenario_closed_loop.json"),
        "--no-api", "--duration-s", "7200", "--format", "machine",
    ])
    log_path.write_bytes(log_path.read_bytes()[:-7])
    result = runner.invoke(main, ["replay", str(log_path)])
    assert result.exit_code == 0
    assert "warning" in result.output or "warning" in (result.stderr or "")


def test_replay_empty_log_initial_state(runner, tmp_path):
    from aquafeed.control import EventLogWriter

    log_path = tmp_path / "empty.aqlg"
    EventLogWriter(log_path).close()
    result = runner.invoke(main, ["replay", str(log_path), "--format", "machine"])
    assert result.exit_code == 0
    recovered = json.loads(result.output)
    assert recovered["decisions"] == []
    assert recovered["state"]["latest_readings"] == {}
