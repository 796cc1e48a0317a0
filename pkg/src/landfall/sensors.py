"""Downward camera simulation: depth, semantic raster, point cloud, rangefinder.

Depth is z-depth: the FRD z coordinate of the hit, not slant range, so a
horizontal plane reads one constant value across the whole image. Rays are
cast per pixel with an exact 2D grid traversal; a ray that drops below a
taller cell's top inside that cell hits its wall at the cell-entry point.
Rays leaving the grid land on an infinite elevation-0 ground apron so every
depth value is finite and positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import CollisionError, OutOfBoundsError
from .geometry import CameraIntrinsics, round_half_up
from .scene import SceneModel, SurfaceClass, agent_grids

_MIN_DEPTH = 1e-3


@dataclass(frozen=True)
class Pose:
    """Drone pose in NED; down is negative above ground."""

    north: float
    east: float
    down: float
    yaw: float = 0.0

    @property
    def altitude(self) -> float:
        return -self.down

    def moved_to(self, north: float, east: float) -> "Pose":
        return Pose(north=north, east=east, down=self.down, yaw=self.yaw)

    def at_altitude(self, altitude: float) -> "Pose":
        return Pose(north=self.north, east=self.east, down=-altitude, yaw=self.yaw)


@dataclass(frozen=True)
class DepthNoiseConfig:
    """Multiplicative Gaussian field emulating monocular depth error.

    sigma scales the relative error; correlation_px is the Gaussian
    smoothing radius of the field, so the error is a low-frequency warp
    rather than per-pixel speckle. sigma = 0 disables noise.
    """

    sigma: float = 0.02
    correlation_px: float = 48.0


@dataclass
class SensorFrame:
    pose: Pose
    tick: int
    intrinsics: CameraIntrinsics
    depth: np.ndarray  # (H, W) float64 meters, indexed [v, u]
    classes: np.ndarray  # (H, W) uint8 SurfaceClass codes
    occupied: np.ndarray  # (H, W) bool, agent beneath the pixel
    point_cloud: np.ndarray  # (N, 3) float64 FRD points
    rangefinder: float

    def digest_arrays(self) -> tuple[bytes, ...]:
        return (self.depth.tobytes(), self.classes.tobytes(), self.occupied.tobytes())


@dataclass(frozen=True)
class AlertEvent:
    """The sudden-landing trigger that opens an episode."""

    tick: int
    reason: str = "gps-spoofing-alarm"


def _noise_field(shape: tuple[int, int], rng: np.random.Generator, correlation_px: float) -> np.ndarray:
    white = rng.standard_normal(shape)
    if correlation_px <= 0:
        return white
    smooth = gaussian_filter(white, sigma=correlation_px, mode="reflect")
    std = smooth.std()
    if std < 1e-12:
        return np.zeros(shape)
    return (smooth - smooth.mean()) / std


def render_frame(
    scene: SceneModel,
    pose: Pose,
    tick: int,
    intrinsics: CameraIntrinsics = CameraIntrinsics(),
    noise: DepthNoiseConfig | None = DepthNoiseConfig(),
    seed: int | None = None,
    cloud_stride: int = 8,
) -> SensorFrame:
    """Render one downward frame at a tick.

    The noise stream is seeded from (seed XOR tick), seed defaulting to the
    scene's, so identical inputs reproduce bit-identical frames.
    """
    if not scene.contains(pose.north, pose.east):
        raise OutOfBoundsError(
            f"pose ({pose.north:.2f}, {pose.east:.2f}) outside scene {scene.scenario_id}"
        )
    occupied_grid, agent_height = agent_grids(scene, tick)
    eff_elev = scene.elevation + agent_height

    own = scene.cell_at(pose.north, pose.east)
    if pose.altitude <= eff_elev[own]:
        raise CollisionError(
            f"altitude {pose.altitude:.2f} not above terrain {eff_elev[own]:.2f} at cell {own}"
        )

    depth_flat, cell_i, cell_j, in_grid = _raycast(scene, pose, intrinsics, eff_elev)
    H, W = intrinsics.height, intrinsics.width
    depth = depth_flat.reshape(H, W)

    classes = np.full(H * W, int(SurfaceClass.GROUND), dtype=np.uint8)
    occupied = np.zeros(H * W, dtype=bool)
    idx = np.where(in_grid)[0]
    classes[idx] = scene.classes[cell_i[idx], cell_j[idx]]
    occupied[idx] = occupied_grid[cell_i[idx], cell_j[idx]]
    classes = classes.reshape(H, W)
    occupied = occupied.reshape(H, W)

    if noise is not None and noise.sigma > 0:
        base = scene.rng_seed if seed is None else seed
        rng = np.random.default_rng(int(base) ^ int(tick))
        field_arr = _noise_field((H, W), rng, noise.correlation_px)
        depth = depth * (1.0 + noise.sigma * field_arr)
        np.clip(depth, _MIN_DEPTH, None, out=depth)

    pu = min(W - 1, max(0, round_half_up(intrinsics.cx)))
    pv = min(H - 1, max(0, round_half_up(intrinsics.cy)))
    rangefinder = float(depth[pv, pu])

    us = np.arange(0, W, cloud_stride)
    vs = np.arange(0, H, cloud_stride)
    uu, vv = np.meshgrid(us, vs)
    zz = depth[vv, uu]
    xx = (uu - intrinsics.cx) * zz / intrinsics.focal_px
    yy = (vv - intrinsics.cy) * zz / intrinsics.focal_px
    cloud = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)

    return SensorFrame(
        pose=pose,
        tick=tick,
        intrinsics=intrinsics,
        depth=depth,
        classes=classes,
        occupied=occupied,
        point_cloud=cloud,
        rangefinder=rangefinder,
    )


def pixel_to_ground(
    scene: SceneModel,
    pose: Pose,
    intrinsics: CameraIntrinsics,
    pixel: tuple[int, int],
) -> tuple[float, float, float, bool]:
    """World point under one pixel, by exact noise-free ray against static terrain.

    Returns (north, east, depth, in_grid); in_grid is False when the ray
    leaves the scene and lands on the ground apron.
    """
    u, v = pixel
    f = intrinsics.focal_px
    dx = (u - intrinsics.cx) / f
    dy = (v - intrinsics.cy) / f
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    dn = c * dx - s * dy
    de = s * dx + c * dy
    csize = scene.cell_size
    gh, gw = scene.grid_height, scene.grid_width
    altitude = pose.altitude

    ci, cj = int(pose.north // csize), int(pose.east // csize)
    step_n = 0 if dn == 0 else (1 if dn > 0 else -1)
    step_e = 0 if de == 0 else (1 if de > 0 else -1)
    t_delta_n = csize / abs(dn) if dn != 0 else math.inf
    t_delta_e = csize / abs(de) if de != 0 else math.inf
    t_max_n = ((ci + (dn > 0)) * csize - pose.north) / dn if dn != 0 else math.inf
    t_max_e = ((cj + (de > 0)) * csize - pose.east) / de if de != 0 else math.inf

    t_enter = 0.0
    for _ in range(4 * (gh + gw) + 16):
        inb = 0 <= ci < gh and 0 <= cj < gw
        h = scene.elevation[ci, cj] if inb else 0.0
        t_exit = min(t_max_n, t_max_e)
        t_surface = altitude - h
        if t_surface <= t_exit:
            t = max(t_surface, t_enter)
            return pose.north + dn * t, pose.east + de * t, t, inb
        if t_max_n < t_max_e:
            t_enter = t_max_n
            ci += step_n
            t_max_n += t_delta_n
        else:
            t_enter = t_max_e
            cj += step_e
            t_max_e += t_delta_e
    raise RuntimeError("ray failed to terminate; scene geometry inconsistent")


def _raycast(
    scene: SceneModel,
    pose: Pose,
    intrinsics: CameraIntrinsics,
    eff_elev: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Exact heightfield intersection for every pixel.

    Returns flat arrays: depth, hit cell i/j, and an in-grid flag. All rays
    advance one cell-boundary crossing per loop iteration, so the Python
    loop runs O(grid diameter) times regardless of image size.
    """
    H, W = intrinsics.height, intrinsics.width
    f = intrinsics.focal_px
    gh, gw = scene.grid_height, scene.grid_width
    csize = scene.cell_size
    altitude = pose.altitude

    dx = (np.arange(W, dtype=np.float64) - intrinsics.cx) / f
    dy = (np.arange(H, dtype=np.float64) - intrinsics.cy) / f
    DX = np.broadcast_to(dx[None, :], (H, W)).ravel()
    DY = np.broadcast_to(dy[:, None], (H, W)).ravel()
    cy_, sy_ = math.cos(pose.yaw), math.sin(pose.yaw)
    dn = cy_ * DX - sy_ * DY
    de = sy_ * DX + cy_ * DY

    n = H * W
    ci = np.full(n, int(pose.north // csize), dtype=np.int64)
    cj = np.full(n, int(pose.east // csize), dtype=np.int64)
    step_n = np.sign(dn).astype(np.int64)
    step_e = np.sign(de).astype(np.int64)

    with np.errstate(divide="ignore", invalid="ignore"):
        t_delta_n = np.where(dn != 0, csize / np.abs(dn), np.inf)
        t_delta_e = np.where(de != 0, csize / np.abs(de), np.inf)
        bound_n = (ci + (dn > 0)) * csize
        bound_e = (cj + (de > 0)) * csize
        t_max_n = np.where(dn != 0, (bound_n - pose.north) / dn, np.inf)
        t_max_e = np.where(de != 0, (bound_e - pose.east) / de, np.inf)

    t_enter = np.zeros(n)
    depth = np.zeros(n)
    hit_i = np.zeros(n, dtype=np.int64)
    hit_j = np.zeros(n, dtype=np.int64)
    in_grid = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)

    max_iters = 4 * (gh + gw) + 16
    for _ in range(max_iters):
        if not active.any():
            break
        inb = (ci >= 0) & (ci < gh) & (cj >= 0) & (cj < gw)
        li = np.clip(ci, 0, gh - 1)
        lj = np.clip(cj, 0, gw - 1)
        h = np.where(inb, eff_elev[li, lj], 0.0)
        t_surface = altitude - h
        t_exit = np.minimum(t_max_n, t_max_e)
        hit = active & (t_surface <= t_exit)
        if hit.any():
            depth[hit] = np.maximum(t_surface[hit], t_enter[hit])
            hit_i[hit] = ci[hit]
            hit_j[hit] = cj[hit]
            in_grid[hit] = inb[hit]
            active &= ~hit
        adv = active
        use_n = adv & (t_max_n < t_max_e)
        use_e = adv & ~use_n
        t_enter[adv] = np.where(use_n[adv], t_max_n[adv], t_max_e[adv])
        ci[use_n] += step_n[use_n]
        t_max_n[use_n] += t_delta_n[use_n]
        cj[use_e] += step_e[use_e]
        t_max_e[use_e] += t_delta_e[use_e]
    else:
        raise RuntimeError("raycast failed to terminate; scene geometry inconsistent")

    return depth, hit_i, hit_j, in_grid
