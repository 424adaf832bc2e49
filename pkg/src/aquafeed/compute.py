"""One-shot offline pipeline: detection + depth files in, ration report out.

This is the broker-less path through the same math the control service runs:
parse both cameras' artifacts, measure every fish, fuse, and price the ration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .biometrics import (
    DEFAULT_FEEDING_TABLE,
    METHOD_WORLD_EUCLIDEAN,
    BiometricCoefficients,
    CameraIntrinsics,
    FeedingBand,
    FeedingBandTable,
    RationPlan,
    build_ration_plan,
)
from .detections import (
    FrameDetections,
    FusedObservation,
    SkippedFish,
    fuse_dual_camera,
    measure_frame,
    parse_frame_detections,
    read_depth_map,
)
from .errors import ParseError


@dataclass(frozen=True)
class FishRow:
    camera_id: str
    fish_id: int
    length_cm: float
    weight_g: float
    band_index: int
    percent_used: float
    grams_per_day: float


@dataclass(frozen=True)
class RationReport:
    observation: FusedObservation
    plan: RationPlan | None
    rows: tuple[FishRow, ...]
    skipped: tuple[tuple[str, SkippedFish], ...]

    def to_dict(self) -> dict:
        from .control.state import observation_to_dict, plan_to_dict

        return {
            "fused_count": self.observation.fused_count,
            "source_counts": list(self.observation.source_counts),
            "degraded": self.observation.degraded,
            "fish": [
                {
                    "camera_id": r.camera_id,
                    "fish_id": r.fish_id,
                    "length_cm": r.length_cm,
                    "weight_g": r.weight_g,
                    "band_index": r.band_index,
                    "percent_used": r.percent_used,
                    "grams_per_day": r.grams_per_day,
                }
                for r in self.rows
            ],
            "skipped": [
                {"camera_id": cam, "fish_id": s.fish_id, "reason": s.reason}
                for cam, s in self.skipped
            ],
            "plan": plan_to_dict(self.plan) if self.plan else None,
            "total_grams_per_day": self.plan.total_grams_per_day if self.plan else 0.0,
            "observation": observation_to_dict(self.observation),
        }

    def to_text(self) -> str:
        lines = []
        a, b = self.observation.source_counts
        lines.append(f"counts: camera A={a}, camera B={b}, fused={self.observation.fused_count}")
        if self.rows:
            lines.append(f"{'camera':>6} {'fish':>4} {'len cm':>8} {'weight g':>9} "
                         f"{'band':>4} {'%/day':>6} {'g/day':>8}")
            for r in self.rows:
                lines.append(
                    f"{r.camera_id:>6} {r.fish_id:>4} {r.length_cm:>8.2f} {r.weight_g:>9.3f} "
                    f"{r.band_index:>4} {r.percent_used:>6.2f} {r.grams_per_day:>8.3f}"
                )
        for cam, s in self.skipped:
            lines.append(f"skipped camera {cam} fish {s.fish_id}: {s.reason}")
        if self.plan is None:
            lines.append("no measurable fish; total 0.000 g/day")
        elif self.plan.fish_count == 0:
            lines.append("no fish detected; total 0.000 g/day")
        else:
            lines.append(
                f"average {self.plan.average_grams_per_day:.3f} g/day x {self.plan.fish_count} fish"
            )
            lines.append(f"total ration: {self.plan.total_grams_per_day:.3f} g/day")
        return "\n".join(lines)


def load_intrinsics(path: str | Path) -> CameraIntrinsics:
    try:
        doc = json.loads(Path(path).read_text("utf-8"))
    except OSError as exc:
        raise ParseError(str(path), f"cannot read intrinsics: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(str(path), f"not valid JSON: {exc}") from None
    try:
        return CameraIntrinsics(
            focal_px=doc["focal_px"],
            image_width=doc.get("image_width", 416),
            image_height=doc.get("image_height", 416),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(str(path), f"bad intrinsics: {exc}") from None


def load_band_table(path: str | Path) -> FeedingBandTable:
    try:
        rows = json.loads(Path(path).read_text("utf-8"))
    except OSError as exc:
        raise ParseError(str(path), f"cannot read band table: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(str(path), f"not valid JSON: {exc}") from None
    if not isinstance(rows, list):
        raise ParseError(str(path), "band table must be an array of bands")
    bands = []
    for i, row in enumerate(rows):
        try:
            upper = row.get("upper_g")
            bands.append(
                FeedingBand(
                    lower_g=row["lower_g"],
                    upper_g=None if upper in (None, "open") else upper,
                    percent_min=row["percent_min"],
                    percent_max=row["percent_max"],
                    percent_override=row.get("percent_override"),
                )
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"{path}[{i}]", f"bad band: {exc}") from None
    return FeedingBandTable(tuple(bands))


def _read(path: str | Path, what: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise ParseError(str(path), f"cannot read {what}: {exc}") from None


def compute_ration(
    detections_a_path: str | Path,
    detections_b_path: str | Path,
    depth_a_path: str | Path,
    depth_b_path: str | Path,
    cam: CameraIntrinsics,
    table: FeedingBandTable = DEFAULT_FEEDING_TABLE,
    coeffs: BiometricCoefficients | None = None,
    method: str = METHOD_WORLD_EUCLIDEAN,
    pairing_tolerance_ms: int = 500,
) -> RationReport:
    coeffs = coeffs or BiometricCoefficients()
    frames: dict[str, FrameDetections] = {}
    depths = {}
    for label, det_path, depth_path in (
        ("A", detections_a_path, depth_a_path),
        ("B", detections_b_path, depth_b_path),
    ):
        try:
            fd = parse_frame_detections(_read(det_path, "detections"))
        except ParseError as exc:
            raise ParseError(f"{det_path}: {exc.path}", str(exc)) from None
        if fd.camera_id != label:
            raise ParseError(str(det_path), f"expected camera {label}, file says {fd.camera_id}")
        try:
            depths[label] = read_depth_map(_read(depth_path, "depth map"))
        except ParseError as exc:
            raise ParseError(f"{depth_path}: {exc.path}", str(exc)) from None
        frames[label] = fd

    rows: list[FishRow] = []
    lengths = {}
    skipped: list[tuple[str, SkippedFish]] = []
    all_weights = []
    for label in ("A", "B"):
        fd = frames[label]
        cam_lengths, cam_weights, cam_skipped = measure_frame(
            fd, depths[label], cam, coeffs, method
        )
        lengths[label] = cam_lengths
        skipped.extend((label, s) for s in cam_skipped)
        skipped_ids = {s.fish_id for s in cam_skipped}
        measured_ids = [f.fish_id for f in fd.fish if f.fish_id not in skipped_ids]
        for fish_id, length, weight in zip(measured_ids, cam_lengths, cam_weights):
            band_index, band = table.lookup(weight.weight_g)
            percent = band.percent
            rows.append(
                FishRow(
                    camera_id=label,
                    fish_id=fish_id,
                    length_cm=length.length_cm,
                    weight_g=weight.weight_g,
                    band_index=band_index,
                    percent_used=percent,
                    grams_per_day=weight.weight_g * percent / 100.0,
                )
            )
        all_weights.extend(cam_weights)

    observation = fuse_dual_camera(
        frames["A"],
        frames["B"],
        pairing_tolerance_ms=pairing_tolerance_ms,
        lengths_a=lengths["A"],
        lengths_b=lengths["B"],
    )
    plan = (
        build_ration_plan(all_weights, observation.fused_count, table) if all_weights else None
    )
    return RationReport(
        observation=observation, plan=plan, rows=tuple(rows), skipped=tuple(skipped)
    )
