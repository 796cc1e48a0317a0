"""JSONL episode traces: writing, reading, validation, replay.

A trace is one episode as a stream of JSON objects, one per line, in the
order the planner emitted them: meta, alert, rounds, landing, result. The
files are deterministic byte-for-byte given the same scene, seed and
config, which is what makes replay verification meaningful.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import TraceError
from .geometry import CameraIntrinsics
from .planner import PlannerConfig
from .scene import SceneModel
from .sensors import DepthNoiseConfig, Pose, render_frame
from .surface_id import ContextLevel

TRACE_SCHEMA = "landfall-trace/1"

_EXPECTED_HEAD = ("meta", "alert")


class TraceWriter:
    """Callable sink for planner events; writes one JSON object per line."""

    def __init__(self, fh):
        self._fh = fh

    def __call__(self, event: dict) -> None:
        self._fh.write(json.dumps(event, separators=(",", ":")) + "\n")

    @classmethod
    def open(cls, path):
        return _OwnedTraceWriter(path)


class _OwnedTraceWriter(TraceWriter):
    def __init__(self, path):
        self._path = path
        super().__init__(open(path, "w", encoding="utf-8"))

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "TraceWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_trace(path) -> list[dict]:
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                events.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise TraceError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
    validate_events(events, source=str(path))
    return events


def validate_events(events: list[dict], source: str = "trace") -> None:
    """Structural checks on a trace event stream.

    Verifies the schema tag, event ordering, contiguous 1-based round
    numbering, pose chaining between rounds, and that the result tallies
    match the landing event.
    """
    if len(events) < 4:
        raise TraceError(f"{source}: too few events ({len(events)})")
    kinds = [e.get("event") for e in events]
    if tuple(kinds[:2]) != _EXPECTED_HEAD:
        raise TraceError(f"{source}: must start with meta then alert, got {kinds[:2]}")
    if kinds[-2:] != ["landing", "result"]:
        raise TraceError(f"{source}: must end with landing then result, got {kinds[-2:]}")

    meta = events[0]
    if meta.get("schema") != TRACE_SCHEMA:
        raise TraceError(f"{source}: unknown schema {meta.get('schema')!r}")

    rounds = [e for e in events[2:-2] if e.get("event") == "round"]
    if len(rounds) != len(events) - 4:
        raise TraceError(f"{source}: unexpected event kinds between alert and landing")
    prev_pose = None
    prev_tick = 0
    for n, ev in enumerate(rounds, start=1):
        if ev.get("round") != n:
            raise TraceError(f"{source}: round {n} numbered {ev.get('round')}")
        if prev_pose is not None and ev["pose_start"] != prev_pose:
            raise TraceError(f"{source}: round {n} pose_start breaks the chain")
        if ev["tick_start"] < prev_tick:
            raise TraceError(f"{source}: round {n} tick_start went backwards")
        if ev["tick_end"] < ev["tick_start"]:
            raise TraceError(f"{source}: round {n} ends before it starts")
        prev_pose = ev["pose_end"]
        prev_tick = ev["tick_end"]

    landing, result = events[-2], events[-1]
    if rounds and landing["kind"] == "confirmed" and rounds[-1]["action"] != "landed":
        raise TraceError(f"{source}: confirmed landing without a landed round")
    if result["rounds_used"] != landing["rounds_used"]:
        raise TraceError(f"{source}: result/landing rounds_used disagree")
    if result["landed_safe"] != landing["safe"]:
        raise TraceError(f"{source}: result/landing safety disagree")


@dataclass
class ReplayReport:
    source: str
    rounds_checked: int = 0
    mismatches: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches


def _config_from_meta(meta: dict) -> tuple[PlannerConfig, CameraIntrinsics]:
    cfg = meta["config"]
    noise = None
    if cfg.get("noise_sigma", 0.0) > 0:
        noise = DepthNoiseConfig(
            sigma=cfg["noise_sigma"], correlation_px=cfg["noise_correlation_px"]
        )
    config = PlannerConfig(
        fraction_k=cfg["fraction_k"],
        land_threshold_m=cfg["land_threshold_m"],
        max_rounds=cfg["max_rounds"],
        horizontal_speed=cfg["horizontal_speed"],
        vertical_speed=cfg["vertical_speed"],
        context=ContextLevel.parse(cfg["context"]),
        grad_threshold=cfg["grad_threshold"],
        min_area_fraction=cfg["min_area_fraction"],
        noise=noise,
        cloud_stride=cfg["cloud_stride"],
        explore_after_denial=cfg["explore_after_denial"],
    )
    fx, cx, cy, w, h = meta["intrinsics"]
    intrinsics = CameraIntrinsics(focal_px=fx, cx=cx, cy=cy, width=int(w), height=int(h))
    return config, intrinsics


def replay(events: list[dict], scene: SceneModel, source: str = "trace") -> ReplayReport:
    """Re-render every round's opening frame and compare digests.

    This confirms that the recorded poses, ticks and sensor configuration
    reproduce the exact frames the planner saw, independent of which judge
    produced the decisions.
    """
    from .planner import _frame_digest  # shared digest definition

    validate_events(events, source=source)
    report = ReplayReport(source=source)
    meta = events[0]
    if meta["scenario"] != scene.scenario_id:
        report.mismatches.append(
            f"scenario mismatch: trace {meta['scenario']!r} vs scene {scene.scenario_id!r}"
        )
        return report
    config, intrinsics = _config_from_meta(meta)
    seed = meta["seed"]

    for ev in events:
        if ev.get("event") != "round":
            continue
        n, e, d, yaw = ev["pose_start"]
        frame = render_frame(
            scene,
            Pose(north=n, east=e, down=d, yaw=yaw),
            ev["tick_start"],
            intrinsics=intrinsics,
            noise=config.noise,
            seed=seed,
            cloud_stride=config.cloud_stride,
        )
        digest = _frame_digest(frame)
        if digest != ev["frame_digest"]:
            report.mismatches.append(
                f"round {ev['round']}: frame digest {digest} != recorded {ev['frame_digest']}"
            )
        report.rounds_checked += 1
    return report
