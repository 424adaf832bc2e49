"""Detection artifacts: frame documents, depth-map files, dual-camera fusion, stub detector.

Detections arrive either as files produced offline or as frame messages on the
bus; both share one JSON schema. Pixel coordinates are always in the resized
416x416 space; intrinsics for other resolutions must be pre-scaled upstream.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .biometrics import (
    KEYPOINT_LABELS,
    METHOD_WORLD_EUCLIDEAN,
    BiometricCoefficients,
    CameraIntrinsics,
    DepthMap,
    LengthEstimate,
    PixelKeypoint,
    TILAPIA,
    WeightEstimate,
    estimate_length,
    weight_from_length,
)
from .errors import (
    DegenerateDetectionError,
    InvalidInputError,
    ParseError,
    UnpairedFrameError,
)

RESIZE_STANDARD = 416
CAMERA_IDS = ("A", "B")

DEPTH_MAGIC = b"DPTH"
DEPTH_HEADER = struct.Struct("<4sII")  # magic, width, height (little-endian)


@dataclass(frozen=True)
class FishKeypointSet:
    """The four labeled keypoints for one detected fish in one frame."""

    fish_id: int
    keypoints: tuple[PixelKeypoint, ...]
    confidence: float

    def __post_init__(self):
        labels = [kp.label for kp in self.keypoints]
        if sorted(labels) != sorted(KEYPOINT_LABELS):
            raise InvalidInputError(
                "keypoints", f"need exactly one of each of {KEYPOINT_LABELS}, got {labels}"
            )
        if not (0.0 <= self.confidence <= 1.0):
            raise InvalidInputError("confidence", f"must be in [0, 1], got {self.confidence}")

    def keypoint(self, label: str) -> PixelKeypoint:
        for kp in self.keypoints:
            if kp.label == label:
                return kp
        raise InvalidInputError("label", f"no keypoint labeled {label!r}")

    @property
    def mouth(self) -> PixelKeypoint:
        return self.keypoint("mouth")

    @property
    def peduncle(self) -> PixelKeypoint:
        return self.keypoint("peduncle")


@dataclass(frozen=True)
class FrameDetections:
    """Everything one camera reports for one frame: keypoint sets plus a count.

    The count comes from a separate counting model and need not equal the
    number of keypoint sets.
    """

    camera_id: str
    frame_ts_ms: int
    image_width: int
    image_height: int
    count: int
    fish: tuple[FishKeypointSet, ...]

    def __post_init__(self):
        if self.camera_id not in CAMERA_IDS:
            raise InvalidInputError("camera_id", f"must be one of {CAMERA_IDS}, got {self.camera_id!r}")
        if self.image_width != RESIZE_STANDARD or self.image_height != RESIZE_STANDARD:
            raise InvalidInputError(
                "image_width/image_height",
                f"frames must use the {RESIZE_STANDARD}x{RESIZE_STANDARD} resize standard, "
                f"got {self.image_width}x{self.image_height}",
            )
        if self.count < 0:
            raise InvalidInputError("count", f"must be >= 0, got {self.count}")
        for fs in self.fish:
            for kp in fs.keypoints:
                if not (0 <= kp.x < self.image_width and 0 <= kp.y < self.image_height):
                    raise InvalidInputError(
                        f"fish[{fs.fish_id}].{kp.label}",
                        f"pixel ({kp.x}, {kp.y}) outside {self.image_width}x{self.image_height}",
                    )


@dataclass(frozen=True)
class FusedObservation:
    """Dual-camera result: averaged count plus pooled per-camera length estimates."""

    frame_ts_ms: int
    fused_count: int
    lengths_cm: tuple[LengthEstimate, ...]
    source_counts: tuple[int, int]
    degraded: bool = False


# --------------------------------------------------------------------------
# Detection document (JSON) parse/serialize
# --------------------------------------------------------------------------


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise ParseError(f"{path}.{key}" if path else key, "missing required field")
    return obj[key]


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(path, f"expected an integer, got {value!r}")
    return value


def _as_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ParseError(path, f"expected a finite number, got {value!r}")
    return float(value)


def parse_frame_detections(document: bytes | str) -> FrameDetections:
    """Parse and validate one detection document (UTF-8 JSON, one frame per document).

    Unknown fields are ignored; missing required fields and invariant
    violations raise ParseError naming the field path.
    """
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError("document", f"not valid UTF-8: {exc}") from None
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError("document", f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError("document", "top level must be an object")

    camera_id = _require(doc, "camera_id", "")
    if not isinstance(camera_id, str):
        raise ParseError("camera_id", f"expected a string, got {camera_id!r}")
    frame_ts_ms = _as_int(_require(doc, "frame_ts_ms", ""), "frame_ts_ms")
    width = _as_int(_require(doc, "image_width", ""), "image_width")
    height = _as_int(_require(doc, "image_height", ""), "image_height")
    count = _as_int(_require(doc, "count", ""), "count")

    fish_raw = _require(doc, "fish", "")
    if not isinstance(fish_raw, list):
        raise ParseError("fish", "expected an array")
    fish = []
    for i, entry in enumerate(fish_raw):
        fpath = f"fish[{i}]"
        if not isinstance(entry, dict):
            raise ParseError(fpath, "expected an object")
        fish_id = _as_int(_require(entry, "fish_id", fpath), f"{fpath}.fish_id")
        confidence = _as_number(_require(entry, "confidence", fpath), f"{fpath}.confidence")
        kps_raw = _require(entry, "keypoints", fpath)
        if not isinstance(kps_raw, list):
            raise ParseError(f"{fpath}.keypoints", "expected an array")
        seen: dict[str, PixelKeypoint] = {}
        for j, kp in enumerate(kps_raw):
            kpath = f"{fpath}.keypoints[{j}]"
            if not isinstance(kp, dict):
                raise ParseError(kpath, "expected an object")
            label = _require(kp, "label", kpath)
            if label not in KEYPOINT_LABELS:
                raise ParseError(f"{kpath}.label", f"unknown keypoint label {label!r}")
            if label in seen:
                raise ParseError(f"{kpath}.label", f"duplicate keypoint {label!r}")
            x = _as_number(_require(kp, "x", kpath), f"{kpath}.x")
            y = _as_number(_require(kp, "y", kpath), f"{kpath}.y")
            try:
                seen[label] = PixelKeypoint(x, y, label)
            except InvalidInputError as exc:
                raise ParseError(f"{kpath}.{exc.field}", str(exc)) from None
        missing = [l for l in KEYPOINT_LABELS if l not in seen]
        if missing:
            raise ParseError(f"{fpath}.keypoints", f"missing keypoint(s): {', '.join(missing)}")
        try:
            fish.append(
                FishKeypointSet(
                    fish_id=fish_id,
                    keypoints=tuple(seen[l] for l in KEYPOINT_LABELS),
                    confidence=confidence,
                )
            )
        except InvalidInputError as exc:
            raise ParseError(f"{fpath}.{exc.field}", str(exc)) from None

    try:
        return FrameDetections(
            camera_id=camera_id,
            frame_ts_ms=frame_ts_ms,
            image_width=width,
            image_height=height,
            count=count,
            fish=tuple(fish),
        )
    except InvalidInputError as exc:
        raise ParseError(exc.field, str(exc)) from None


def frame_detections_to_dict(fd: FrameDetections) -> dict:
    return {
        "camera_id": fd.camera_id,
        "frame_ts_ms": fd.frame_ts_ms,
        "image_width": fd.image_width,
        "image_height": fd.image_height,
        "count": fd.count,
        "fish": [
            {
                "fish_id": fs.fish_id,
                "confidence": fs.confidence,
                "keypoints": [{"label": kp.label, "x": kp.x, "y": kp.y} for kp in fs.keypoints],
            }
            for fs in fd.fish
        ],
    }


def serialize_frame_detections(fd: FrameDetections) -> bytes:
    """Canonical UTF-8 encoding; parse(serialize(fd)) reproduces fd exactly."""
    return json.dumps(
        frame_detections_to_dict(fd), sort_keys=True, separators=(",", ":"), allow_nan=False
    ).encode("utf-8")


# --------------------------------------------------------------------------
# Depth map files: magic "DPTH", u32 width, u32 height, then w*h float32 LE
# --------------------------------------------------------------------------


def write_depth_map(depth: DepthMap) -> bytes:
    header = DEPTH_HEADER.pack(DEPTH_MAGIC, depth.width, depth.height)
    body = depth.grid.astype("<f4").tobytes(order="C")
    return header + body


def read_depth_map(data: bytes) -> DepthMap:
    """Decode a depth-map file; errors name the offending byte offset."""
    if len(data) < DEPTH_HEADER.size:
        raise ParseError(f"byte {len(data)}", "truncated header (need 12 bytes)")
    magic, width, height = DEPTH_HEADER.unpack_from(data, 0)
    if magic != DEPTH_MAGIC:
        raise ParseError("byte 0", f"bad magic {magic!r}, expected {DEPTH_MAGIC!r}")
    if width == 0 or height == 0:
        raise ParseError("byte 4", f"zero dimension {width}x{height}")
    expected = DEPTH_HEADER.size + width * height * 4
    if len(data) != expected:
        raise ParseError(
            f"byte {min(len(data), expected)}",
            f"expected {expected} bytes for {width}x{height} grid, got {len(data)}",
        )
    grid = np.frombuffer(data, dtype="<f4", offset=DEPTH_HEADER.size).reshape(height, width)
    bad = ~(np.isfinite(grid) & (grid > 0))
    if bad.any():
        flat_idx = int(np.argmax(bad))
        offset = DEPTH_HEADER.size + flat_idx * 4
        raise ParseError(f"byte {offset}", f"non-positive or non-finite depth value {grid.flat[flat_idx]!r}")
    return DepthMap(grid.astype(np.float64))


# --------------------------------------------------------------------------
# Per-frame measurement and dual-camera fusion
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SkippedFish:
    fish_id: int
    reason: str


def measure_frame(
    fd: FrameDetections,
    depth: DepthMap,
    cam: CameraIntrinsics,
    coeffs: BiometricCoefficients = TILAPIA,
    method: str = METHOD_WORLD_EUCLIDEAN,
) -> tuple[list[LengthEstimate], list[WeightEstimate], list[SkippedFish]]:
    """Run the biometric pipeline over every fish in a frame.

    Degenerate detections are rejected per fish, not per frame: the skipped
    list records them and the remaining fish still contribute.
    """
    lengths: list[LengthEstimate] = []
    weights: list[WeightEstimate] = []
    skipped: list[SkippedFish] = []
    for fs in fd.fish:
        try:
            length = estimate_length(fs.mouth, fs.peduncle, depth, cam, method)
            weights.append(weight_from_length(length, coeffs))
            lengths.append(length)
        except (DegenerateDetectionError, InvalidInputError) as exc:
            skipped.append(SkippedFish(fs.fish_id, str(exc)))
    return lengths, weights, skipped


def fuse_counts(count_a: int, count_b: int) -> int:
    """Average two camera counts, rounding half up so an extra sighting is kept."""
    return (count_a + count_b + 1) // 2


def fuse_dual_camera(
    a: FrameDetections,
    b: FrameDetections,
    pairing_tolerance_ms: int = 500,
    lengths_a: Sequence[LengthEstimate] = (),
    lengths_b: Sequence[LengthEstimate] = (),
) -> FusedObservation:
    """Fuse a synchronized frame pair: mean count (rounded half up), pooled lengths.

    Lengths are pooled rather than paired; there is no cross-camera fish
    identity association. Raises UnpairedFrameError when the timestamp gap
    exceeds the tolerance, in which case callers fall back to processing the
    frames singly (flagged degraded).
    """
    gap = abs(a.frame_ts_ms - b.frame_ts_ms)
    if gap > pairing_tolerance_ms:
        raise UnpairedFrameError(
            f"frame timestamps {a.frame_ts_ms} and {b.frame_ts_ms} differ by {gap} ms "
            f"(tolerance {pairing_tolerance_ms} ms)"
        )
    return FusedObservation(
        frame_ts_ms=min(a.frame_ts_ms, b.frame_ts_ms),
        fused_count=fuse_counts(a.count, b.count),
        lengths_cm=tuple(lengths_a) + tuple(lengths_b),
        source_counts=(a.count, b.count),
    )


def single_camera_observation(
    fd: FrameDetections, lengths: Sequence[LengthEstimate] = ()
) -> FusedObservation:
    """Degraded single-camera path used when a frame never finds its partner."""
    counts = (fd.count, 0) if fd.camera_id == "A" else (0, fd.count)
    return FusedObservation(
        frame_ts_ms=fd.frame_ts_ms,
        fused_count=fd.count,
        lengths_cm=tuple(lengths),
        source_counts=counts,
        degraded=True,
    )


# --------------------------------------------------------------------------
# Stub detector (stands in for the out-of-scope neural models)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StubNoiseModel:
    """Detector error model: independent per-fish misses plus pixel jitter."""

    p_miss: float = 0.0
    keypoint_noise_px: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.p_miss <= 1.0):
            raise InvalidInputError("p_miss", f"must be in [0, 1], got {self.p_miss}")
        if self.keypoint_noise_px < 0:
            raise InvalidInputError("keypoint_noise_px", f"must be >= 0, got {self.keypoint_noise_px}")


@dataclass(frozen=True)
class GroundTruthFish:
    """True keypoint positions for one fish, in resized pixel coordinates."""

    fish_id: int
    keypoints: tuple[PixelKeypoint, ...]


def stub_detect(
    tank_truth: Sequence[GroundTruthFish],
    noise: StubNoiseModel,
    rng: np.random.Generator,
    camera_id: str,
    frame_ts_ms: int,
    image_size: int = RESIZE_STANDARD,
) -> FrameDetections:
    """Simulate a detector over ground truth.

    Each true fish is independently missed with probability p_miss; kept fish
    get zero-mean gaussian pixel jitter (clamped to image bounds). The count
    is the number of kept fish. Deterministic given the generator state.
    """
    hi = np.nextafter(float(image_size), 0.0)  # largest float strictly < image_size
    fish = []
    for truth in tank_truth:
        if rng.random() < noise.p_miss:
            continue
        kps = []
        for kp in truth.keypoints:
            x, y = kp.x, kp.y
            if noise.keypoint_noise_px > 0:
                x += rng.normal(0.0, noise.keypoint_noise_px)
                y += rng.normal(0.0, noise.keypoint_noise_px)
            kps.append(PixelKeypoint(min(max(x, 0.0), hi), min(max(y, 0.0), hi), kp.label))
        fish.append(FishKeypointSet(fish_id=truth.fish_id, keypoints=tuple(kps), confidence=1.0))
    return FrameDetections(
        camera_id=camera_id,
        frame_ts_ms=frame_ts_ms,
        image_width=image_size,
        image_height=image_size,
        count=len(fish),
        fish=tuple(fish),
    )
