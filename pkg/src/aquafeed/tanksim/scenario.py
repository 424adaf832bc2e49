"""Scenario configuration for the virtual tank (UTF-8 JSON file)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..biometrics import BiometricCoefficients, CameraIntrinsics
from ..detections import CAMERA_IDS, StubNoiseModel
from ..errors import InvalidInputError, ParseError
from ..telemetry.messages import SENSOR_KINDS


@dataclass(frozen=True)
class SensorSpec:
    """Drift/noise model for one simulated sensor."""

    kind: str
    baseline: float
    drift_per_hour: float = 0.0
    noise_std: float = 0.0
    low: float = 0.0
    high: float = 14.0
    interval_s: float = 300.0

    def __post_init__(self):
        if self.kind not in SENSOR_KINDS:
            raise InvalidInputError("kind", f"unknown sensor kind {self.kind!r}")
        if self.noise_std < 0:
            raise InvalidInputError("noise_std", "must be >= 0")
        if self.low >= self.high:
            raise InvalidInputError("low/high", "need low < high")
        if self.interval_s <= 0:
            raise InvalidInputError("interval_s", "must be > 0")


@dataclass(frozen=True)
class FeederSpec:
    """Hopper + load-cell dispensation model.

    With a noiseless load cell the gate closes exactly at the target (the
    continuous limit of the control loop); with noise the loop is simulated
    in quanta of rate * control_period.
    """

    hopper_g: float = 10_000.0
    dispense_rate_g_per_s: float = 5.0
    load_cell_noise_std: float = 0.0
    control_period_s: float = 0.1
    tolerance_g: float = 2.0

    def __post_init__(self):
        if self.hopper_g < 0:
            raise InvalidInputError("hopper_g", "must be >= 0")
        if self.dispense_rate_g_per_s <= 0:
            raise InvalidInputError("dispense_rate_g_per_s", "must be > 0")
        if self.load_cell_noise_std < 0:
            raise InvalidInputError("load_cell_noise_std", "must be >= 0")
        if self.control_period_s <= 0:
            raise InvalidInputError("control_period_s", "must be > 0")
        if self.tolerance_g <= 0:
            raise InvalidInputError("tolerance_g", "must be > 0")


DEFAULT_SENSORS = {
    "ph": SensorSpec("ph", baseline=7.2, low=0.0, high=14.0),
    "dissolved_oxygen": SensorSpec("dissolved_oxygen", baseline=6.5, low=0.0, high=20.0),
    "temperature": SensorSpec("temperature", baseline=27.0, low=-5.0, high=45.0),
}


@dataclass(frozen=True)
class Scenario:
    tank_id: str = "t1"
    seed: int = 0
    population: int = 50
    initial_weight_g: float = 10.0
    feed_conversion_ratio: float = 1.5
    sensors: dict = field(default_factory=lambda: dict(DEFAULT_SENSORS))
    feeder: FeederSpec = field(default_factory=FeederSpec)
    ph_pump_rate_ph_per_s: float = 0.01
    focal_px: float = 500.0
    depth_m: float = 2.0
    frame_interval_s: float = 1800.0
    detector: StubNoiseModel = field(default_factory=StubNoiseModel)
    start_ts_ms: int = 1_000
    coefficients: BiometricCoefficients = field(default_factory=BiometricCoefficients)

    def __post_init__(self):
        if self.population < 0:
            raise InvalidInputError("population", "must be >= 0")
        if self.initial_weight_g <= 0:
            raise InvalidInputError("initial_weight_g", "must be > 0")
        if self.feed_conversion_ratio <= 0:
            raise InvalidInputError("feed_conversion_ratio", "must be > 0")
        if self.depth_m <= 0 or not math.isfinite(self.depth_m):
            raise InvalidInputError("depth_m", "must be positive and finite")
        if self.frame_interval_s <= 0:
            raise InvalidInputError("frame_interval_s", "must be > 0")
        if self.start_ts_ms <= 0:
            raise InvalidInputError("start_ts_ms", "must be > 0")
        unknown = set(self.sensors) - set(SENSOR_KINDS)
        if unknown:
            raise InvalidInputError("sensors", f"unknown sensor kinds {sorted(unknown)}")

    @property
    def camera(self) -> CameraIntrinsics:
        return CameraIntrinsics(focal_px=self.focal_px)

    @property
    def camera_ids(self) -> tuple[str, ...]:
        return CAMERA_IDS


def load_scenario(source: str | Path | dict) -> Scenario:
    """Build a Scenario from a JSON file (or an already-parsed dict).

    Unknown keys are rejected so typos in configs fail loudly.
    """
    if isinstance(source, (str, Path)):
        try:
            doc = json.loads(Path(source).read_text("utf-8"))
        except OSError as exc:
            raise ParseError(str(source), f"cannot read scenario: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ParseError(str(source), f"not valid JSON: {exc}") from None
    else:
        doc = dict(source)
    if not isinstance(doc, dict):
        raise ParseError("scenario", "top level must be an object")

    known = {
        "tank_id", "seed", "population", "initial_weight_g", "feed_conversion_ratio",
        "sensors", "feeder", "ph_pump_rate_ph_per_s", "focal_px", "depth_m",
        "frame_interval_s", "detector", "start_ts_ms", "coefficients",
    }
    unknown = set(doc) - known
    if unknown:
        raise ParseError("scenario", f"unknown key(s): {sorted(unknown)}")

    kwargs = {k: v for k, v in doc.items() if k not in ("sensors", "feeder", "detector", "coefficients")}
    try:
        if "sensors" in doc:
            sensors = dict(DEFAULT_SENSORS)
            for kind, spec in doc["sensors"].items():
                sensors[kind] = SensorSpec(kind=kind, **spec)
            kwargs["sensors"] = sensors
        if "feeder" in doc:
            kwargs["feeder"] = FeederSpec(**doc["feeder"])
        if "detector" in doc:
            kwargs["detector"] = StubNoiseModel(**doc["detector"])
        if "coefficients" in doc:
            kwargs["coefficients"] = BiometricCoefficients(**doc["coefficients"])
        return Scenario(**kwargs)
    except TypeError as exc:
        raise ParseError("scenario", f"bad field: {exc}") from None
