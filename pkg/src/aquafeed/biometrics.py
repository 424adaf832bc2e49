"""Pure math core: pixel-to-world projection, fish length/weight estimation, feed rationing.

Everything here is deterministic and side-effect free; all functions are safe
for unrestricted concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDetectionError, InvalidInputError

KEYPOINT_LABELS = ("mouth", "peduncle", "belly", "back")

METHOD_WORLD_EUCLIDEAN = "world-euclidean"
METHOD_EQ3_LITERAL = "eq3-literal"
LENGTH_METHODS = (METHOD_WORLD_EUCLIDEAN, METHOD_EQ3_LITERAL)


@dataclass(frozen=True)
class BiometricCoefficients:
    """Length-weight coefficients for W = a * L^b (L in cm, W in grams).

    Defaults are the tilapia calibration; other species can be configured.
    """

    a: float = 0.014
    b: float = 3.02

    def __post_init__(self):
        if not (self.a > 0 and math.isfinite(self.a)):
            raise InvalidInputError("a", f"must be positive and finite, got {self.a}")
        if not (self.b > 0 and math.isfinite(self.b)):
            raise InvalidInputError("b", f"must be positive and finite, got {self.b}")


TILAPIA = BiometricCoefficients()


@dataclass(frozen=True)
class PixelKeypoint:
    """One labeled keypoint in resized-image pixel coordinates."""

    x: float
    y: float
    label: str

    def __post_init__(self):
        if self.label not in KEYPOINT_LABELS:
            raise InvalidInputError("label", f"unknown keypoint label {self.label!r}")
        for name, v in (("x", self.x), ("y", self.y)):
            if not (math.isfinite(v) and v >= 0):
                raise InvalidInputError(name, f"must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class CameraIntrinsics:
    focal_px: float
    image_width: int = 416
    image_height: int = 416

    def __post_init__(self):
        if not (self.focal_px > 0 and math.isfinite(self.focal_px)):
            raise InvalidInputError("focal_px", f"must be positive and finite, got {self.focal_px}")
        if self.image_width <= 0 or self.image_height <= 0:
            raise InvalidInputError("image_width/image_height", "must be positive")


class DepthMap:
    """Per-pixel metric depth field (meters), row-major.

    Depth values must be strictly positive and finite. Lookups use
    nearest-pixel sampling.
    """

    def __init__(self, depth: np.ndarray):
        arr = np.asarray(depth, dtype=np.float64)
        if arr.ndim != 2:
            raise InvalidInputError("depth", f"expected a 2-D grid, got shape {arr.shape}")
        if arr.size == 0:
            raise InvalidInputError("depth", "grid is empty")
        if not np.all(np.isfinite(arr)) or not np.all(arr > 0):
            raise InvalidInputError("depth", "all depth values must be positive and finite")
        self._depth = arr
        self.height, self.width = arr.shape

    @classmethod
    def constant(cls, width: int, height: int, depth_m: float) -> "DepthMap":
        if not (depth_m > 0 and math.isfinite(depth_m)):
            raise InvalidInputError("depth_m", f"must be positive and finite, got {depth_m}")
        return cls(np.full((height, width), depth_m, dtype=np.float64))

    @property
    def grid(self) -> np.ndarray:
        return self._depth

    def contains(self, x: float, y: float) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def at(self, x: float, y: float) -> float:
        """Depth at pixel (x, y), nearest-pixel sampled."""
        if not self.contains(x, y):
            raise InvalidInputError(
                "keypoint", f"pixel ({x}, {y}) outside {self.width}x{self.height} depth map"
            )
        col = min(int(round(x)), self.width - 1)
        row = min(int(round(y)), self.height - 1)
        return float(self._depth[row, col])


@dataclass(frozen=True)
class WorldPoint:
    """Camera-frame coordinates in meters; z is the distance along the optical axis."""

    x: float
    y: float
    z: float

    def distance_to(self, other: "WorldPoint") -> float:
        return math.dist((self.x, self.y, self.z), (other.x, other.y, other.z))


@dataclass(frozen=True)
class LengthEstimate:
    length_cm: float
    method: str = METHOD_WORLD_EUCLIDEAN

    def __post_init__(self):
        if self.method not in LENGTH_METHODS:
            raise InvalidInputError("method", f"unknown length method {self.method!r}")
        if not (self.length_cm > 0 and math.isfinite(self.length_cm)):
            raise InvalidInputError("length_cm", f"must be positive and finite, got {self.length_cm}")


@dataclass(frozen=True)
class WeightEstimate:
    weight_g: float

    def __post_init__(self):
        if not (self.weight_g > 0 and math.isfinite(self.weight_g)):
            raise InvalidInputError("weight_g", f"must be positive and finite, got {self.weight_g}")


def project_to_world(kp: PixelKeypoint, depth_m: float, cam: CameraIntrinsics) -> WorldPoint:
    """Lift a pixel keypoint to camera-frame world coordinates.

    Uses the plain pinhole relations X = x*d/f, Y = y*d/f, Z = d with no
    principal-point offset; for length measurement the offset cancels when
    both endpoints share a depth.
    """
    if not (depth_m > 0 and math.isfinite(depth_m)):
        raise InvalidInputError("depth_m", f"must be positive and finite, got {depth_m}")
    f = cam.focal_px
    return WorldPoint(kp.x * depth_m / f, kp.y * depth_m / f, depth_m)


def estimate_length(
    mouth: PixelKeypoint,
    peduncle: PixelKeypoint,
    depth: DepthMap,
    cam: CameraIntrinsics,
    method: str = METHOD_WORLD_EUCLIDEAN,
) -> LengthEstimate:
    """Estimate mouth-to-peduncle fish length in centimeters.

    ``world-euclidean`` (default) reports the Euclidean distance between the
    two projected world points. ``eq3-literal`` reports focal/distance
    instead, kept as an opt-in fidelity mode even though its units do not
    survive dimensional analysis.

    Raises:
        InvalidInputError: a keypoint lies outside the depth map.
        DegenerateDetectionError: the keypoints coincide.
    """
    if method not in LENGTH_METHODS:
        raise InvalidInputError("method", f"unknown length method {method!r}")
    if mouth.label != "mouth":
        raise InvalidInputError("mouth", f"expected the mouth keypoint, got {mouth.label!r}")
    if peduncle.label != "peduncle":
        raise InvalidInputError("peduncle", f"expected the peduncle keypoint, got {peduncle.label!r}")

    p_mouth = project_to_world(mouth, depth.at(mouth.x, mouth.y), cam)
    p_ped = project_to_world(peduncle, depth.at(peduncle.x, peduncle.y), cam)
    distance_m = p_mouth.distance_to(p_ped)
    if distance_m == 0.0:
        raise DegenerateDetectionError(
            f"coincident mouth/peduncle keypoints at ({mouth.x}, {mouth.y})"
        )
    if method == METHOD_EQ3_LITERAL:
        return LengthEstimate(cam.focal_px / distance_m, METHOD_EQ3_LITERAL)
    return LengthEstimate(distance_m * 100.0, METHOD_WORLD_EUCLIDEAN)


def weight_from_length(
    length: LengthEstimate | float, coeffs: BiometricCoefficients = TILAPIA
) -> WeightEstimate:
    """Allometric weight in grams from length in centimeters: W = a * L^b."""
    length_cm = length.length_cm if isinstance(length, LengthEstimate) else float(length)
    if not (length_cm > 0 and math.isfinite(length_cm)):
        raise InvalidInputError("length_cm", f"must be positive and finite, got {length_cm}")
    return WeightEstimate(coeffs.a * length_cm**coeffs.b)


def length_from_weight(weight_g: float, coeffs: BiometricCoefficients = TILAPIA) -> float:
    """Inverse of :func:`weight_from_length`: L = (W/a)^(1/b), in centimeters."""
    if not (weight_g > 0 and math.isfinite(weight_g)):
        raise InvalidInputError("weight_g", f"must be positive and finite, got {weight_g}")
    return (weight_g / coeffs.a) ** (1.0 / coeffs.b)


@dataclass(frozen=True)
class FeedingBand:
    """One weight band: [lower_g, upper_g) with a daily feeding percentage range.

    ``percent_override`` replaces the midpoint point-estimate when a farm
    wants a different operating point inside the band.
    """

    lower_g: float
    upper_g: float | None  # None = open above
    percent_min: float
    percent_max: float
    percent_override: float | None = None

    def __post_init__(self):
        if self.lower_g < 0:
            raise InvalidInputError("lower_g", "must be >= 0")
        if self.upper_g is not None and self.upper_g <= self.lower_g:
            raise InvalidInputError("upper_g", "must exceed lower_g")
        if self.percent_min <= 0 or self.percent_max < self.percent_min:
            raise InvalidInputError("percent_min/percent_max", "need 0 < min <= max")
        if self.percent_override is not None and self.percent_override <= 0:
            raise InvalidInputError("percent_override", "must be positive")

    def contains(self, weight_g: float) -> bool:
        if self.upper_g is None:
            return weight_g >= self.lower_g
        return self.lower_g <= weight_g < self.upper_g

    @property
    def percent(self) -> float:
        if self.percent_override is not None:
            return self.percent_override
        return (self.percent_min + self.percent_max) / 2.0


@dataclass(frozen=True)
class FeedingBandTable:
    """Ordered, contiguous weight bands mapping fish weight to a daily feed percentage."""

    bands: tuple[FeedingBand, ...]

    def __post_init__(self):
        if not self.bands:
            raise InvalidInputError("bands", "table is empty")
        if self.bands[0].lower_g != 0:
            raise InvalidInputError("bands", "first band must start at 0 g")
        for prev, cur in zip(self.bands, self.bands[1:]):
            if prev.upper_g is None:
                raise InvalidInputError("bands", "only the last band may be open above")
            if cur.lower_g != prev.upper_g:
                raise InvalidInputError(
                    "bands", f"gap/overlap between {prev.upper_g} and {cur.lower_g}"
                )
        if self.bands[-1].upper_g is not None:
            raise InvalidInputError("bands", "last band must be open above")

    def lookup(self, weight_g: float) -> tuple[int, FeedingBand]:
        if not (weight_g > 0 and math.isfinite(weight_g)):
            raise InvalidInputError("weight_g", f"must be positive and finite, got {weight_g}")
        for i, band in enumerate(self.bands):
            if band.contains(weight_g):
                return i, band
        raise InvalidInputError("weight_g", f"no band matches {weight_g}")  # unreachable


# Daily feeding allowances for tilapia, percent of body weight per day.
DEFAULT_FEEDING_TABLE = FeedingBandTable(
    (
        FeedingBand(0.0, 1.0, 10.0, 30.0),
        FeedingBand(1.0, 5.0, 6.0, 10.0),
        FeedingBand(5.0, 20.0, 4.0, 6.0),
        FeedingBand(20.0, 100.0, 3.0, 4.0),
        FeedingBand(100.0, None, 1.5, 3.0),
    )
)


def ration_percent(
    weight_g: float, table: FeedingBandTable = DEFAULT_FEEDING_TABLE
) -> tuple[int, float]:
    """Return (band index, daily feeding percent) for a fish of the given weight."""
    idx, band = table.lookup(weight_g)
    return idx, band.percent


@dataclass(frozen=True)
class PerFishRation:
    weight_g: float
    band_index: int
    percent_used: float
    grams_per_day: float


@dataclass(frozen=True)
class RationPlan:
    """Daily feed amounts: per measured fish, the measured average, and the tank total.

    ``fish_count`` comes from the counting path and may exceed the number of
    measured fish; the total scales the measured average by the count.
    """

    per_fish: tuple[PerFishRation, ...]
    average_grams_per_day: float
    fish_count: int
    total_grams_per_day: float
    note: str | None = None


def build_ration_plan(
    weights: list[WeightEstimate],
    fish_count: int,
    table: FeedingBandTable = DEFAULT_FEEDING_TABLE,
) -> RationPlan:
    """Combine per-fish weights with the tank count into a daily ration plan.

    Raises InvalidInputError when no weights were measured. A zero count is
    allowed and produces a zero total flagged "no fish detected".
    """
    if not weights:
        raise InvalidInputError("weights", "at least one measured fish is required")
    if fish_count < 0:
        raise InvalidInputError("fish_count", f"must be >= 0, got {fish_count}")

    per_fish = []
    for w in weights:
        idx, percent = ration_percent(w.weight_g, table)
        per_fish.append(PerFishRation(w.weight_g, idx, percent, w.weight_g * percent / 100.0))
    average = sum(p.grams_per_day for p in per_fish) / len(per_fish)
    total = fish_count * average
    return RationPlan(
        per_fish=tuple(per_fish),
        average_grams_per_day=average,
        fish_count=fish_count,
        total_grams_per_day=total,
        note="no fish detected" if fish_count == 0 else None,
    )
