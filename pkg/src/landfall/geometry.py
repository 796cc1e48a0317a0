"""Camera model, frame conversions and launch-point sampling.

Conventions used throughout the package:

* Body frame is FRD: x forward, y right, z down. A point is "visible" when
  its z is positive (below the downward camera).
* World frame is NED: x north, y east, z down. Ground datum is down = 0,
  so altitude = -down.
* Pixels are (u, v) with u along the image width axis and v along the
  height axis. The u axis follows body-forward, v follows body-right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

PixelRect = tuple[int, int, int, int]  # (u_min, v_min, u_max, v_max), half-open


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera: focal length in pixels, principal point, image size."""

    focal_px: float = 100.0
    cx: float = 64.0
    cy: float = 64.0
    width: int = 128
    height: int = 128

    def __post_init__(self) -> None:
        if self.focal_px <= 0:
            raise ConfigError(f"focal_px must be positive, got {self.focal_px}")
        if self.width <= 0 or self.height <= 0:
            raise ConfigError(f"image size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise ConfigError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )


def round_half_up(x: float) -> int:
    # np.round ties to even; pixel quantization here always rounds .5 up
    return int(math.floor(x + 0.5))


def project(point, intrinsics: CameraIntrinsics) -> tuple[float, float]:
    """Project an FRD point (x, y, z) with z > 0 to a real-valued pixel.

    u = x * f / z + cx, v = y * f / z + cy. Body-forward maps to the u
    axis and body-right to the v axis; no sign flips.
    """
    x, y, z = float(point[0]), float(point[1]), float(point[2])
    if z <= 0:
        raise ValueError(f"cannot project point with non-positive depth z={z}")
    u = x * intrinsics.focal_px / z + intrinsics.cx
    v = y * intrinsics.focal_px / z + intrinsics.cy
    return u, v


def back_project(u: float, v: float, z: float, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Inverse of project: pixel plus depth back to an FRD point."""
    if z <= 0:
        raise ValueError(f"cannot back-project with non-positive depth z={z}")
    x = (u - intrinsics.cx) * z / intrinsics.focal_px
    y = (v - intrinsics.cy) * z / intrinsics.focal_px
    return np.array([x, y, z], dtype=np.float64)


@dataclass
class PixelToPointTable:
    """Mapping from integer pixels to the FRD point that projected there."""

    intrinsics: CameraIntrinsics
    entries: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)


def build_table(cloud: np.ndarray, intrinsics: CameraIntrinsics) -> PixelToPointTable:
    """Project a point cloud into pixel space, rounding to integer pixels.

    Rounding is half-up on both axes. When two points round to the same
    pixel the nearer one (smaller z) wins; on equal z the first seen stays.
    Points that round outside the image are dropped.
    """
    cloud = np.asarray(cloud, dtype=np.float64)
    if cloud.size == 0:
        raise ValueError("point cloud is empty")
    if cloud.ndim != 2 or cloud.shape[1] != 3:
        raise ValueError(f"expected (N, 3) cloud, got shape {cloud.shape}")

    table = PixelToPointTable(intrinsics=intrinsics)
    for row in cloud:
        u, v = project(row, intrinsics)
        pu, pv = round_half_up(u), round_half_up(v)
        if not (0 <= pu < intrinsics.width and 0 <= pv < intrinsics.height):
            continue
        key = (pu, pv)
        kept = table.entries.get(key)
        if kept is None or row[2] < kept[2]:
            table.entries[key] = row.copy()
    return table


def lookup(table: PixelToPointTable, pixel: tuple[int, int]) -> np.ndarray:
    """Return the stored FRD point nearest to a query pixel.

    Exact hits win; otherwise nearest by Euclidean pixel distance, ties
    broken by smaller u then smaller v.
    """
    if not table.entries:
        raise ValueError("lookup on empty table")
    pu, pv = int(pixel[0]), int(pixel[1])
    exact = table.entries.get((pu, pv))
    if exact is not None:
        return exact.copy()
    best = min(
        table.entries,
        key=lambda k: ((k[0] - pu) ** 2 + (k[1] - pv) ** 2, k[0], k[1]),
    )
    return table.entries[best].copy()


def frd_to_ned(x_frd: float, y_frd: float, yaw: float) -> tuple[float, float]:
    """Rotate planar body coordinates into world north/east by yaw.

    Pure planar rotation; the down component passes through unchanged
    elsewhere and is dropped here.
    """
    c, s = math.cos(yaw), math.sin(yaw)
    x_ned = c * x_frd - s * y_frd
    y_ned = s * x_frd + c * y_frd
    return x_ned, y_ned


def radical_inverse(index: int, base: int) -> float:
    """Van der Corput radical inverse of a positive integer in a prime base."""
    if index < 1:
        raise ValueError(f"radical inverse index starts at 1, got {index}")
    f, r = 1.0, 0.0
    while index > 0:
        f = f / base
        r += f * (index % base)
        index //= base
    return r


WorldRect = tuple[float, float, float, float]  # (north_min, east_min, north_max, east_max)


def halton_points(count: int, bounds: WorldRect, skip: int = 0) -> np.ndarray:
    """Low-discrepancy launch points over a world rectangle.

    Point i uses Halton index i + skip + 1 with base 2 on the north axis
    and base 3 on the east axis, scaled into bounds. Every point lies
    strictly inside the rectangle.
    """
    if count < 0:
        raise ValueError(f"count must be non-negative, got {count}")
    if skip < 0:
        raise ValueError(f"skip must be non-negative, got {skip}")
    n0, e0, n1, e1 = bounds
    if not (n1 > n0 and e1 > e0):
        raise ConfigError(f"degenerate bounds {bounds}")
    out = np.empty((count, 2), dtype=np.float64)
    for i in range(count):
        idx = i + skip + 1
        out[i, 0] = n0 + (n1 - n0) * radical_inverse(idx, 2)
        out[i, 1] = e0 + (e1 - e0) * radical_inverse(idx, 3)
    return out
