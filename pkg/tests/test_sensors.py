import numpy as np
import pytest

from landfall.errors import CollisionError, OutOfBoundsError
from landfall.geometry import CameraIntrinsics, project
from landfall.scene import SurfaceClass, parse_scene_text
from landfall.sensors import (
    AlertEvent,
    DepthNoiseConfig,
    Pose,
    pixel_to_ground,
    render_frame,
)

INTR = CameraIntrinsics()
HOVER = Pose(north=24.0, east=24.0, down=-50.0)  # 30 m over the smoke roof deck


def test_pose_helpers():
    p = Pose(north=1.0, east=2.0, down=-40.0, yaw=0.5)
    assert p.altitude == 40.0
    q = p.moved_to(5.0, 6.0)
    assert (q.north, q.east, q.down, q.yaw) == (5.0, 6.0, -40.0, 0.5)
    r = p.at_altitude(10.0)
    assert (r.north, r.east, r.down, r.yaw) == (1.0, 2.0, -10.0, 0.5)


def test_alert_event_default_reason():
    assert AlertEvent(tick=0).reason == "gps-spoofing-alarm"


# -- noise-free depth exactness ------------------------------------------

def test_plateau_depths_exact(smoke_scene):
    frame = render_frame(smoke_scene, HOVER, tick=0, noise=None)
    # camera sits over the roof interior: principal ray hits the deck
    assert frame.depth[64, 64] == 30.0
    assert frame.rangefinder == 30.0
    assert SurfaceClass(frame.classes[64, 64]) is SurfaceClass.ROOFTOP
    # u follows north: the roof's north span [12, 28) at depth 30 covers
    # u in [24, 77.3); a ray at u=20 exits the roof block above the deck
    # and lands on the ground 50 m down
    assert frame.depth[64, 30] == 30.0
    assert frame.depth[64, 20] == 50.0
    assert SurfaceClass(frame.classes[64, 20]) is SurfaceClass.GROUND
    # east edge of the deck lies between v=77 and v=78 at this pose
    assert frame.depth[77, 64] == 30.0
    assert frame.depth[78, 64] == 50.0


def test_rays_leaving_grid_land_on_apron(smoke_scene):
    frame = render_frame(smoke_scene, HOVER, tick=0, noise=None)
    # corner ray lands at (-8, -8), outside the 48 m grid: flat apron at
    # elevation 0 gives a finite depth and a ground label
    assert frame.depth[0, 0] == 50.0
    assert SurfaceClass(frame.classes[0, 0]) is SurfaceClass.GROUND
    assert not frame.occupied[0, 0]
    assert np.all(np.isfinite(frame.depth))
    assert np.all(frame.depth > 0)


def test_wall_hits_use_cell_entry_depth(smoke_scene):
    # camera hovering east of the roof: rays crossing the east face below
    # deck height hit the wall at the crossing point, t = 1200 / (64 - v)
    pose = Pose(north=24.0, east=40.0, down=-50.0)
    frame = render_frame(smoke_scene, pose, tick=0, noise=None)
    assert frame.depth[23, 64] == 30.0  # still on the deck
    for v in range(26, 39):
        assert frame.depth[v, 64] == pytest.approx(1200.0 / (64 - v), abs=1e-9)
    band = frame.depth[25:40, 64]
    assert np.all(np.diff(band) > 0)  # wall depths ramp monotonically
    assert frame.depth[45, 64] == 50.0  # past the face: plain ground


def test_pose_validation(smoke_scene):
    with pytest.raises(OutOfBoundsError):
        render_frame(smoke_scene, Pose(north=-5.0, east=24.0, down=-50.0), tick=0)
    with pytest.raises(CollisionError):
        render_frame(smoke_scene, Pose(north=24.0, east=24.0, down=-15.0), tick=0)


# -- noise ----------------------------------------------------------------

def test_noise_is_deterministic_in_seed_and_tick(smoke_scene):
    a = render_frame(smoke_scene, HOVER, tick=3)
    b = render_frame(smoke_scene, HOVER, tick=3)
    assert a.depth.tobytes() == b.depth.tobytes()
    c = render_frame(smoke_scene, HOVER, tick=4)
    assert a.depth.tobytes() != c.depth.tobytes()
    d = render_frame(smoke_scene, HOVER, tick=3, seed=999)
    assert a.depth.tobytes() != d.depth.tobytes()
    e = render_frame(smoke_scene, HOVER, tick=3, seed=999)
    assert d.depth.tobytes() == e.depth.tobytes()


def test_zero_sigma_matches_noise_free(smoke_scene):
    clean = render_frame(smoke_scene, HOVER, tick=0, noise=None)
    zero = render_frame(smoke_scene, HOVER, tick=0, noise=DepthNoiseConfig(sigma=0.0))
    np.testing.assert_array_equal(clean.depth, zero.depth)


def test_noise_is_multiplicative_and_bounded(smoke_scene):
    clean = render_frame(smoke_scene, HOVER, tick=0, noise=None)
    n2 = render_frame(smoke_scene, HOVER, tick=0, noise=DepthNoiseConfig(sigma=0.02))
    n4 = render_frame(smoke_scene, HOVER, tick=0, noise=DepthNoiseConfig(sigma=0.04))
    r2 = n2.depth / clean.depth - 1.0
    r4 = n4.depth / clean.depth - 1.0
    assert r2.max() > 0  # noise actually applied
    # same seeded field, scaled by sigma
    np.testing.assert_allclose(r4, 2.0 * r2, atol=1e-12)
    # the field is normalized to unit variance; excursions stay modest
    assert np.abs(r2).max() < 6 * 0.02


def test_noise_field_is_correlated_not_speckle(smoke_scene):
    noisy = render_frame(smoke_scene, HOVER, tick=0)
    clean = render_frame(smoke_scene, HOVER, tick=0, noise=None)
    field = noisy.depth / clean.depth - 1.0
    # neighbor pixels of a 48 px correlated field move together
    dv = np.abs(np.diff(field, axis=0)).mean()
    assert dv < 0.1 * np.abs(field).std()


# -- point cloud and rangefinder ------------------------------------------

def test_point_cloud_back_projects_onto_depth(smoke_scene):
    frame = render_frame(smoke_scene, HOVER, tick=0, noise=None)
    us = np.arange(0, 128, 8)
    vs = np.arange(0, 128, 8)
    assert frame.point_cloud.shape == (256, 3)
    k = 0
    for v in vs:
        for u in us:
            x, y, z = frame.point_cloud[k]
            assert z == frame.depth[v, u]  # z-depth convention, not slant
            uu, vv = project((x, y, z), INTR)
            assert abs(uu - u) < 1e-9 and abs(vv - v) < 1e-9
            k += 1


def test_cloud_stride_controls_density(smoke_scene):
    frame = render_frame(smoke_scene, HOVER, tick=0, noise=None, cloud_stride=32)
    assert frame.point_cloud.shape == (16, 3)


def test_rangefinder_reads_principal_pixel(smoke_scene):
    frame = render_frame(smoke_scene, HOVER, tick=5)
    assert frame.rangefinder == frame.depth[64, 64]


def test_digest_arrays_cover_payload(smoke_scene):
    a = render_frame(smoke_scene, HOVER, tick=2)
    b = render_frame(smoke_scene, HOVER, tick=2)
    assert a.digest_arrays() == b.digest_arrays()
    c = render_frame(smoke_scene, HOVER, tick=3)
    assert a.digest_arrays() != c.digest_arrays()


# -- agents in frame -------------------------------------------------------

AGENT_SCENE = """\
landfall-scene v1
name agents
grid 8 8
cell 4.0
seed 3
char . ground 0
char r road 0
map
........
........
rrrrrrrr
........
........
........
........
........
endmap
agent vehicle speed=1 footprint=0 path=5,2;5,3;5,4
launch 22 14 30
"""


def test_agents_raise_depth_and_mark_occupied():
    scene = parse_scene_text(AGENT_SCENE, "agents")
    pose = Pose(north=22.0, east=10.0, down=-30.0)  # over vehicle cell (5, 2)
    frame = render_frame(scene, pose, tick=0, noise=None)
    assert frame.depth[64, 64] == 30.0 - 1.8
    assert frame.occupied[64, 64]
    assert SurfaceClass(frame.classes[64, 64]) is SurfaceClass.ROAD
    # one tick later the vehicle moved one cell east
    frame1 = render_frame(scene, pose, tick=1, noise=None)
    assert frame1.depth[64, 64] == 30.0
    assert not frame1.occupied[64, 64]


# -- pixel_to_ground --------------------------------------------------------

def test_pixel_to_ground_known_rays(smoke_scene):
    n, e, d, ok = pixel_to_ground(smoke_scene, HOVER, INTR, (64, 64))
    assert (n, e, d, ok) == (24.0, 24.0, 30.0, True)
    n, e, d, ok = pixel_to_ground(smoke_scene, HOVER, INTR, (20, 64))
    assert ok and d == 50.0
    assert n == pytest.approx(24.0 - 0.44 * 50.0)
    assert e == 24.0
    n, e, d, ok = pixel_to_ground(smoke_scene, HOVER, INTR, (0, 0))
    assert not ok and d == 50.0
    assert n == pytest.approx(-8.0) and e == pytest.approx(-8.0)


def test_pixel_to_ground_ignores_agents_and_noise():
    scene = parse_scene_text(AGENT_SCENE, "agents")
    pose = Pose(north=22.0, east=10.0, down=-30.0)
    n, e, d, ok = pixel_to_ground(scene, pose, INTR, (64, 64))
    assert (n, e, d, ok) == (22.0, 10.0, 30.0, True)  # static terrain, no vehicle


def test_pixel_to_ground_agrees_with_render(smoke_scene):
    frame = render_frame(smoke_scene, HOVER, tick=0, noise=None)
    for pixel in [(64, 64), (30, 40), (100, 100), (20, 64)]:
        _, _, d, _ = pixel_to_ground(smoke_scene, HOVER, INTR, pixel)
        assert d == pytest.approx(frame.depth[pixel[1], pixel[0]], abs=1e-9)
