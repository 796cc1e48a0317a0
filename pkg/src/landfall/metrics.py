"""Evaluation metrics and report emission.

Geometry metrics (jaccard, landing distance, ground-truth projections) are
pure functions; EvalReport packages per-episode rows plus aggregates and
serializes to CSV, JSON and a human summary. CSV column order is part of
the contract: scenario, seed, landed_safe, kind, rounds_used, ticks,
denials, judge_calls, final_north, final_east, surface_class,
distance_to_target.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

from .geometry import CameraIntrinsics, frd_to_ned, project
from .planner import EpisodeResult
from .scene import SceneModel
from .sensors import Pose

REPORT_SCHEMA = "landfall-report/1"

CSV_COLUMNS = [
    "scenario",
    "seed",
    "landed_safe",
    "kind",
    "rounds_used",
    "ticks",
    "denials",
    "judge_calls",
    "final_north",
    "final_east",
    "surface_class",
    "distance_to_target",
]


def jaccard(a, b) -> float:
    """Intersection over union of two half-open rectangles (x0, y0, x1, y1).

    Works for pixel boxes and world rectangles alike. Degenerate input
    (zero-area union) scores 0.0.
    """
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    inter = max(0.0, iw) * max(0.0, ih)
    area_a = max(0.0, a[2] - a[0]) * max(0.0, a[3] - a[1])
    area_b = max(0.0, b[2] - b[0]) * max(0.0, b[3] - b[1])
    union = area_a + area_b - inter
    if union <= 0:
        return 0.0
    return inter / union


def landing_distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Planar distance between two (north, east) points, in meters."""
    return math.hypot(a[0] - b[0], a[1] - b[1])


def mark_bbox_pixels(
    scene: SceneModel,
    mark_name: str,
    pose: Pose,
    intrinsics: CameraIntrinsics = CameraIntrinsics(),
) -> tuple[float, float, float, float]:
    """Ground-truth pixel bbox of a marked rect as seen from a pose.

    The mark's world corners are rotated into the body frame (inverse of
    the yaw rotation) and projected at the depth of the mark's surface.
    The box is real-valued; detections quantize to pixels so comparisons
    should tolerate about a pixel of slack per edge.
    """
    n0, e0, n1, e1 = scene.mark_world_rect(mark_name)
    i0, j0, _, _ = scene.marks[mark_name]
    depth = pose.altitude - float(scene.elevation[i0, j0])
    if depth <= 0:
        raise ValueError(f"pose is not above mark {mark_name!r}")
    us, vs = [], []
    for n, e in ((n0, e0), (n0, e1), (n1, e0), (n1, e1)):
        # rotation by -yaw maps world offsets back into the body frame
        bx, by = frd_to_ned(n - pose.north, e - pose.east, -pose.yaw)
        u, v = project((bx, by, depth), intrinsics)
        us.append(u)
        vs.append(v)
    return (min(us), min(vs), max(us), max(vs))


@dataclass
class EvalRow:
    scenario: str
    seed: int
    landed_safe: bool
    kind: str
    rounds_used: int
    ticks: int
    denials: int
    judge_calls: int
    final_north: float
    final_east: float
    surface_class: str
    distance_to_target: float | None = None


def row_from_result(result: EpisodeResult, scene: SceneModel | None = None) -> EvalRow:
    landing = result.landing
    distance = None
    if scene is not None and "target" in scene.marks:
        n0, e0, n1, e1 = scene.mark_world_rect("target")
        distance = landing_distance(
            (landing.pose.north, landing.pose.east), ((n0 + n1) / 2, (e0 + e1) / 2)
        )
    return EvalRow(
        scenario=result.scenario_id,
        seed=result.seed,
        landed_safe=result.landed_safe,
        kind=landing.kind,
        rounds_used=result.rounds_used,
        ticks=result.final_tick,
        denials=result.denials,
        judge_calls=result.judge_calls,
        final_north=landing.pose.north,
        final_east=landing.pose.east,
        surface_class=landing.classification.surface_class.label,
        distance_to_target=distance,
    )


def row_from_events(events: list[dict], scene: SceneModel | None = None) -> EvalRow:
    """Rebuild an evaluation row from a recorded trace."""
    meta, landing, result = events[0], events[-2], events[-1]
    distance = None
    if scene is not None and "target" in scene.marks:
        n0, e0, n1, e1 = scene.mark_world_rect("target")
        distance = landing_distance(
            tuple(result["final"]), ((n0 + n1) / 2, (e0 + e1) / 2)
        )
    return EvalRow(
        scenario=meta["scenario"],
        seed=meta["seed"],
        landed_safe=result["landed_safe"],
        kind=landing["kind"],
        rounds_used=result["rounds_used"],
        ticks=result["ticks"],
        denials=result["denials"],
        judge_calls=result["judge_calls"],
        final_north=result["final"][0],
        final_east=result["final"][1],
        surface_class=landing["surface_class"],
        distance_to_target=distance,
    )


@dataclass
class EvalReport:
    rows: list[EvalRow]

    def aggregate(self) -> dict:
        n = len(self.rows)
        if n == 0:
            return {"episodes": 0}
        safe = sum(r.landed_safe for r in self.rows)
        distances = [r.distance_to_target for r in self.rows if r.distance_to_target is not None]
        return {
            "episodes": n,
            "safe_count": safe,
            "safe_rate": safe / n,
            "mean_rounds": sum(r.rounds_used for r in self.rows) / n,
            "mean_ticks": sum(r.ticks for r in self.rows) / n,
            "timeout_count": sum(r.kind == "timeout_forced" for r in self.rows),
            "denial_total": sum(r.denials for r in self.rows),
            "mean_distance_to_target": sum(distances) / len(distances) if distances else None,
        }

    def to_json_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "rows": [asdict(r) for r in self.rows],
            "aggregate": self.aggregate(),
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=False)
            fh.write("\n")

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in self.rows:
                d = asdict(r)
                writer.writerow([_csv_cell(d[c]) for c in CSV_COLUMNS])

    def human_summary(self) -> str:
        agg = self.aggregate()
        if agg["episodes"] == 0:
            return "no episodes"
        lines = [
            f"episodes        {agg['episodes']}",
            f"safe landings   {agg['safe_count']} ({agg['safe_rate']:.0%})",
            f"mean rounds     {agg['mean_rounds']:.2f}",
            f"mean ticks      {agg['mean_ticks']:.2f}",
            f"timeouts        {agg['timeout_count']}",
            f"denials total   {agg['denial_total']}",
        ]
        if agg["mean_distance_to_target"] is not None:
            lines.append(f"mean dist to target {agg['mean_distance_to_target']:.2f} m")
        return "\n".join(lines)


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return value
