"""
core/perception.py
------------------
Camera-side math on synthetic inputs.

- Calibration lines in normalized form a·x + b·y + c = 0 (a² + b² = 1).
- Lane assignment: each detection's center goes to the lane owning the
  nearest calibration line (lines come in left/right pairs, lane k owns
  lines 2k and 2k+1).
- Binary-mask density: set bits inside the ROI over the ROI area.
- Text fixtures for calibration lines and masks.

No image decoding, no detector.
"""

from __future__ import annotations
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
import math

import numpy as np

from core.errors import ConfigError, DegenerateLine, FixtureError

Point = tuple[float, float]

# Colour tag per lane, cycled when there are more lanes than colours.
LANE_PALETTE: tuple[str, ...] = ("red", "green", "blue", "yellow", "cyan", "magenta")

# -------- Lines --------

def line_coefficients(p1: Point, p2: Point) -> tuple[float, float, float]:
    (x1, y1), (x2, y2) = p1, p2
    a, b = y2 - y1, x1 - x2
    norm = math.hypot(a, b)
    if norm == 0:
        raise DegenerateLine(f"calibration points coincide at {p1}")
    c = -a * x1 - b * y1
    return a / norm, b / norm, c / norm


@dataclass(frozen=True)
class CalibrationLine:
    p1: Point
    p2: Point
    coefficients: tuple[float, float, float] = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "coefficients", line_coefficients(self.p1, self.p2))

    def translated(self, dx: float, dy: float) -> "CalibrationLine":
        return CalibrationLine((self.p1[0] + dx, self.p1[1] + dy), (self.p2[0] + dx, self.p2[1] + dy))


def point_line_distance(pt: Point, line: CalibrationLine) -> float:
    a, b, c = line.coefficients
    return abs(a * pt[0] + b * pt[1] + c)


@dataclass(frozen=True)
class LaneRegion:
    index: int
    left: CalibrationLine
    right: CalibrationLine
    color_tag: str


def _check_pairs(lines: Sequence[CalibrationLine]) -> None:
    if not lines:
        raise ConfigError("at least one pair of calibration lines is required", key="lines")
    if len(lines) % 2:
        raise ConfigError(f"calibration lines come in pairs, got {len(lines)}", key="lines")


def lane_regions(lines: Sequence[CalibrationLine]) -> list[LaneRegion]:
    _check_pairs(lines)
    return [
        LaneRegion(k, lines[2 * k], lines[2 * k + 1], LANE_PALETTE[k % len(LANE_PALETTE)])
        for k in range(len(lines) // 2)
    ]

# -------- Detections --------

@dataclass(frozen=True)
class DetectionBox:
    x0: float
    y0: float
    width: float
    height: float

    def __post_init__(self) -> None:
        if not (self.width > 0 and self.height > 0):
            raise ConfigError(f"box size must be > 0, got {self.width}x{self.height}", key="box")

    @property
    def center(self) -> Point:
        # y0 - h/2 as the counting algorithm writes it; a y-down image would use y0 + h/2
        return self.x0 + self.width / 2, self.y0 - self.height / 2

    def translated(self, dx: float, dy: float) -> "DetectionBox":
        return DetectionBox(self.x0 + dx, self.y0 + dy, self.width, self.height)


def assign_lanes(boxes: Sequence[DetectionBox], lines: Sequence[CalibrationLine]) -> np.ndarray:
    """Lane index per box. Equidistant lines resolve to the smaller line index."""
    _check_pairs(lines)
    if not boxes:
        return np.zeros(0, dtype=int)
    centers = np.array([b.center for b in boxes], dtype=float)
    coef = np.array([ln.coefficients for ln in lines], dtype=float)
    dist = np.abs(centers @ coef[:, :2].T + coef[:, 2])
    return np.argmin(dist, axis=1) // 2


def assign_and_count(boxes: Sequence[DetectionBox], lines: Sequence[CalibrationLine]) -> list[int]:
    lanes = assign_lanes(boxes, lines)
    return np.bincount(lanes, minlength=len(lines) // 2).astype(int).tolist()


def observation_from_counts(count: int, lane_length_m: float, vehicle_length_m: float) -> float:
    """Entry density implied by a vehicle count, clamped to [0, 1]."""
    if not lane_length_m > 0:
        raise ConfigError(f"lane length must be > 0, got {lane_length_m}", key="lane_length_m")
    if count < 0:
        raise ConfigError(f"count must be >= 0, got {count}", key="count")
    return min(1.0, count * vehicle_length_m / lane_length_m)

# -------- Masks --------

@dataclass(frozen=True)
class OccupancyMask:
    bits: np.ndarray                          # (height, width), values 0/1
    roi: tuple[int, int, int, int]            # x0, y0, w, h

    def __post_init__(self) -> None:
        arr = np.asarray(self.bits)
        if arr.ndim != 2:
            raise ConfigError(f"mask must be 2-D, got shape {arr.shape}", key="mask")
        if not np.isin(arr, (0, 1)).all():
            raise ConfigError("mask bits must be 0 or 1", key="mask")
        x0, y0, w, h = self.roi
        if min(x0, y0, w, h) < 0 or x0 + w > arr.shape[1] or y0 + h > arr.shape[0]:
            raise ConfigError(f"roi {self.roi} outside a {arr.shape[1]}x{arr.shape[0]} mask", key="roi")
        frozen = arr.astype(np.uint8, copy=True)
        frozen.setflags(write=False)
        object.__setattr__(self, "bits", frozen)

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])


def mask_density(mask: OccupancyMask) -> float:
    x0, y0, w, h = mask.roi
    if w * h == 0:
        raise ConfigError("roi has zero area", key="roi")
    return int(np.count_nonzero(mask.bits[y0:y0 + h, x0:x0 + w])) / (w * h)

# -------- Fixtures --------

def _body_lines(text: str) -> list[str]:
    return [ln.split("#", 1)[0].strip() for ln in text.splitlines() if ln.split("#", 1)[0].strip()]


def parse_calibration_fixture(text: str) -> list[CalibrationLine]:
    out: list[CalibrationLine] = []
    for n, line in enumerate(_body_lines(text), start=1):
        parts = line.split()
        if len(parts) != 4:
            raise FixtureError(f"calibration line {n}: expected 'x1 y1 x2 y2'")
        try:
            x1, y1, x2, y2 = (float(p) for p in parts)
        except ValueError:
            raise FixtureError(f"calibration line {n}: non-numeric value") from None
        try:
            out.append(CalibrationLine((x1, y1), (x2, y2)))
        except DegenerateLine as e:
            raise FixtureError(f"calibration line {n}: {e}") from None
    if not out or len(out) % 2:
        raise FixtureError(f"calibration fixture needs an even, non-zero number of lines, got {len(out)}")
    return out


def parse_mask_fixture(text: str) -> OccupancyMask:
    rows = _body_lines(text)
    if not rows:
        raise FixtureError("mask fixture is empty")
    try:
        width, height, x0, y0, rw, rh = (int(p) for p in rows[0].split())
    except ValueError:
        raise FixtureError("mask header must be 'width height x0 y0 roi_w roi_h'") from None
    grid = rows[1:]
    if len(grid) != height:
        raise FixtureError(f"mask fixture has {len(grid)} rows, header says {height}")
    for i, row in enumerate(grid, start=1):
        if len(row) != width or set(row) - {"0", "1"}:
            raise FixtureError(f"mask row {i}: expected {width} characters of '0'/'1'")
    bits = np.array([[ch == "1" for ch in row] for row in grid], dtype=np.uint8).reshape(height, width)
    try:
        return OccupancyMask(bits, (x0, y0, rw, rh))
    except ConfigError as e:
        raise FixtureError(str(e)) from None


def load_calibration_fixture(path: str | Path) -> list[CalibrationLine]:
    try:
        return parse_calibration_fixture(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise FixtureError(f"cannot read calibration fixture {path}: {e}") from e


def load_mask_fixture(path: str | Path) -> OccupancyMask:
    try:
        return parse_mask_fixture(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise FixtureError(f"cannot read mask fixture {path}: {e}") from e
