"""Fraction-of-range descent planner driving the detect/judge loop.

One round: render, detect candidates (quadrant fallback when nothing is
flat enough), let the judge rank them, fly over the winner, take a fresh
close-up, ask for confirmation, then land or descend to k times the
rangefinder reading. Denials burn the round; after max_rounds the drone is
out of battery margin and commits to a forced landing wherever it hovers.

Every round emits one JSON-ready event through the optional on_event hook,
which is how traces get written without the planner knowing about files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .geometry import CameraIntrinsics, build_table, frd_to_ned, lookup
from .judge import (
    BackendUnavailable,
    JudgeContext,
    JudgeError,
    JudgeRequest,
    JudgeVerdict,
    build_confirmation_request,
    build_ranking_request,
)
from .scene import LandingClassification, SceneModel, classify_touchdown
from .sensors import AlertEvent, DepthNoiseConfig, Pose, SensorFrame, render_frame
from .surface_id import (
    CROPPED,
    CandidateSurface,
    ContextLevel,
    extract_candidates,
    flatness_mask,
    quadrant_fallback,
)

DEFAULT_FRACTION_K = 0.5
DEFAULT_LAND_THRESHOLD_M = 5.0
DEFAULT_MAX_ROUNDS = 10
HORIZONTAL_SPEED = 5.0  # meters per tick
VERTICAL_SPEED = 2.5  # meters per tick


def descend_target(rangefinder: float, k: float) -> float:
    """Next hover range after one descent step: k times the current reading."""
    if not 0 < k < 1:
        raise ValueError(f"fraction k must be in (0, 1), got {k}")
    return k * rangefinder


def should_land(rangefinder: float, threshold: float) -> bool:
    return rangefinder <= threshold


@dataclass(frozen=True)
class PlannerConfig:
    fraction_k: float = DEFAULT_FRACTION_K
    land_threshold_m: float = DEFAULT_LAND_THRESHOLD_M
    max_rounds: int = DEFAULT_MAX_ROUNDS
    horizontal_speed: float = HORIZONTAL_SPEED
    vertical_speed: float = VERTICAL_SPEED
    context: ContextLevel = CROPPED
    grad_threshold: float = 0.05
    min_area_fraction: float = 0.01
    noise: DepthNoiseConfig | None = field(default_factory=DepthNoiseConfig)
    cloud_stride: int = 8
    explore_after_denial: bool = False

    def __post_init__(self) -> None:
        if not 0 < self.fraction_k < 1:
            raise ValueError(f"fraction_k must be in (0, 1), got {self.fraction_k}")
        if self.land_threshold_m <= 0:
            raise ValueError("land_threshold_m must be positive")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")
        if self.horizontal_speed <= 0 or self.vertical_speed <= 0:
            raise ValueError("speeds must be positive")

    def to_json_dict(self) -> dict:
        return {
            "fraction_k": self.fraction_k,
            "land_threshold_m": self.land_threshold_m,
            "max_rounds": self.max_rounds,
            "horizontal_speed": self.horizontal_speed,
            "vertical_speed": self.vertical_speed,
            "context": self.context.describe(),
            "grad_threshold": self.grad_threshold,
            "min_area_fraction": self.min_area_fraction,
            "noise_sigma": 0.0 if self.noise is None else self.noise.sigma,
            "noise_correlation_px": 0.0 if self.noise is None else self.noise.correlation_px,
            "cloud_stride": self.cloud_stride,
            "explore_after_denial": self.explore_after_denial,
        }


@dataclass
class MoveRecord:
    pixel: tuple[int, int]
    target_north: float
    target_east: float
    distance: float
    ticks: int


@dataclass
class RoundOutcome:
    index: int  # 1-based
    action: str  # moved | descended | denied | fallback | landed
    tick_start: int
    tick_end: int
    pose_start: Pose
    pose_end: Pose
    rangefinder_start: float
    rangefinder_end: float
    candidates: list[CandidateSurface]
    ranking: JudgeVerdict | None
    move: MoveRecord | None
    confirmation: JudgeVerdict | None
    frame_digest: str
    note: str = ""


@dataclass
class LandingRecord:
    kind: str  # confirmed | timeout_forced
    tick: int
    pose: Pose
    classification: LandingClassification
    rounds_used: int


@dataclass
class EpisodeResult:
    scenario_id: str
    seed: int
    alert: AlertEvent
    rounds: list[RoundOutcome]
    landing: LandingRecord
    judge_calls: int
    denials: int

    @property
    def landed_safe(self) -> bool:
        return self.landing.classification.safe

    @property
    def rounds_used(self) -> int:
        return self.landing.rounds_used

    @property
    def final_tick(self) -> int:
        return self.landing.tick


# ---------- event serialization ----------


def _pose_json(pose: Pose) -> list[float]:
    return [pose.north, pose.east, pose.down, pose.yaw]


def _candidate_json(cand: CandidateSurface) -> dict:
    return {
        "bbox": list(cand.bbox),
        "origin": cand.origin,
        "area_px": int(cand.area_px),
        "context": cand.context.describe(),
    }


def _verdict_json(verdict: JudgeVerdict | None, include_wire: bool = False) -> dict | None:
    if verdict is None:
        return None
    out = {
        "stage": verdict.stage,
        "indices": list(verdict.indices),
        "rationale": verdict.rationale,
        "backend": verdict.backend_id,
        "latency_ms": verdict.latency_ms,
    }
    if include_wire and verdict.wire is not None:
        out["wire"] = verdict.wire
    return out


def round_event(outcome: RoundOutcome) -> dict:
    move = None
    if outcome.move is not None:
        move = {
            "pixel": list(outcome.move.pixel),
            "target": [outcome.move.target_north, outcome.move.target_east],
            "distance": outcome.move.distance,
            "ticks": outcome.move.ticks,
        }
    event = {
        "event": "round",
        "round": outcome.index,
        "action": outcome.action,
        "tick_start": outcome.tick_start,
        "tick_end": outcome.tick_end,
        "pose_start": _pose_json(outcome.pose_start),
        "pose_end": _pose_json(outcome.pose_end),
        "rangefinder_start": outcome.rangefinder_start,
        "rangefinder_end": outcome.rangefinder_end,
        "candidates": [_candidate_json(c) for c in outcome.candidates],
        "ranking": _verdict_json(outcome.ranking),
        "move": move,
        "confirmation": _verdict_json(outcome.confirmation),
        "frame_digest": outcome.frame_digest,
    }
    if outcome.note:
        event["note"] = outcome.note
    return event


def landing_event(landing: LandingRecord) -> dict:
    cls = landing.classification
    return {
        "event": "landing",
        "kind": landing.kind,
        "tick": landing.tick,
        "pose": _pose_json(landing.pose),
        "surface_class": cls.surface_class.label,
        "safe": cls.safe,
        "reasons": list(cls.reasons),
        "rounds_used": landing.rounds_used,
    }


def result_event(result: EpisodeResult) -> dict:
    return {
        "event": "result",
        "scenario": result.scenario_id,
        "seed": result.seed,
        "landed_safe": result.landed_safe,
        "rounds_used": result.rounds_used,
        "ticks": result.final_tick,
        "judge_calls": result.judge_calls,
        "denials": result.denials,
        "final": [result.landing.pose.north, result.landing.pose.east],
    }


# ---------- the episode loop ----------


def _frame_digest(frame: SensorFrame) -> str:
    import hashlib

    h = hashlib.sha256()
    for blob in frame.digest_arrays():
        h.update(blob)
    return "sha256:" + h.hexdigest()


def _clamp_target(scene: SceneModel, north: float, east: float) -> tuple[float, float]:
    # stay inside the grid; the apron is renderable only for rays, not poses
    m = min(scene.cell_size / 2, scene.north_extent / 4, scene.east_extent / 4)
    return (
        min(max(north, m), scene.north_extent - m),
        min(max(east, m), scene.east_extent - m),
    )


def _closeup_candidate(frame: SensorFrame, context: ContextLevel) -> CandidateSurface:
    """Central half-size window of a frame, packaged for confirmation."""
    from .surface_id import _crop_for

    H, W = frame.classes.shape
    bbox = (W // 4, H // 4, W - W // 4, H - H // 4)
    return CandidateSurface(
        bbox=bbox,
        crop=_crop_for(frame, bbox, context),
        context=context,
        origin="detected",
        area_px=(bbox[2] - bbox[0]) * (bbox[3] - bbox[1]),
    )


def run_episode(
    scene: SceneModel,
    judge,
    config: PlannerConfig = PlannerConfig(),
    seed: int | None = None,
    launch: tuple[float, float, float, float] | None = None,
    intrinsics: CameraIntrinsics = CameraIntrinsics(),
    on_event: Callable[[dict], None] | None = None,
) -> EpisodeResult:
    """Play one sudden-landing episode to touchdown.

    judge is any object with evaluate(request, context) -> JudgeVerdict.
    Judge failures of the recoverable kind count as denials; connectivity
    failures propagate to the caller. The returned result mirrors exactly
    the events pushed through on_event.
    """
    if launch is None:
        if scene.launch is None:
            raise ValueError(f"scene {scene.scenario_id} declares no launch and none was given")
        launch = scene.launch
    north, east, altitude, yaw = launch
    seed = scene.rng_seed if seed is None else int(seed)

    def emit(event: dict) -> None:
        if on_event is not None:
            on_event(event)

    emit(
        {
            "event": "meta",
            "schema": "landfall-trace/1",
            "scenario": scene.scenario_id,
            "seed": seed,
            "launch": [north, east, altitude, yaw],
            "intrinsics": [intrinsics.focal_px, intrinsics.cx, intrinsics.cy,
                           intrinsics.width, intrinsics.height],
            "config": config.to_json_dict(),
        }
    )

    alert = AlertEvent(tick=0)
    emit({"event": "alert", "tick": alert.tick, "reason": alert.reason})

    pose = Pose(north=north, east=east, down=-altitude, yaw=yaw)
    tick = 0
    rounds: list[RoundOutcome] = []
    judge_calls = 0
    denials = 0
    denied_targets: list[tuple[float, float]] = []
    landing: LandingRecord | None = None

    def render(p: Pose, t: int) -> SensorFrame:
        return render_frame(
            scene, p, t, intrinsics=intrinsics, noise=config.noise,
            seed=seed, cloud_stride=config.cloud_stride,
        )

    for round_index in range(1, config.max_rounds + 1):
        tick_start = tick
        pose_start = pose
        frame = render(pose, tick)
        rf_start = frame.rangefinder
        digest = _frame_digest(frame)
        context = JudgeContext(scene=scene, frame=frame)

        mask = flatness_mask(frame.depth, config.grad_threshold)
        candidates = extract_candidates(
            mask, frame, config.min_area_fraction, context=config.context
        )
        fallback = not candidates
        if fallback:
            candidates = quadrant_fallback(frame)

        ranking: JudgeVerdict | None = None
        move: MoveRecord | None = None
        confirmation: JudgeVerdict | None = None
        action = "denied"
        note = ""

        try:
            request = build_ranking_request(candidates, round_index)
            ranking = judge.evaluate(request, context)
            judge_calls += 1
        except BackendUnavailable:
            # connectivity is not a verdict; the caller decides what now
            raise
        except JudgeError as exc:
            judge_calls += 1
            denials += 1
            note = f"ranking failed: {exc}"
            rounds.append(
                RoundOutcome(
                    index=round_index, action="denied",
                    tick_start=tick_start, tick_end=tick,
                    pose_start=pose_start, pose_end=pose,
                    rangefinder_start=rf_start, rangefinder_end=rf_start,
                    candidates=candidates, ranking=None, move=None,
                    confirmation=None, frame_digest=digest, note=note,
                )
            )
            emit(round_event(rounds[-1]))
            continue

        table = build_table(frame.point_cloud, intrinsics)

        def target_of(cand: CandidateSurface) -> tuple[float, float]:
            body_point = lookup(table, cand.center_pixel)
            dn, de = frd_to_ned(float(body_point[0]), float(body_point[1]), pose.yaw)
            return _clamp_target(scene, pose.north + dn, pose.east + de)

        chosen = candidates[ranking.indices[0]]
        if config.explore_after_denial and denied_targets:
            # steer around spots a judge already turned down
            for idx in ranking.indices:
                tn, te = target_of(candidates[idx])
                if all(math.hypot(tn - n0, te - e0) > scene.cell_size for n0, e0 in denied_targets):
                    chosen = candidates[idx]
                    break
        target_n, target_e = target_of(chosen)
        distance = math.hypot(target_n - pose.north, target_e - pose.east)
        transit_ticks = math.ceil(distance / config.horizontal_speed) if distance > 0 else 0
        move = MoveRecord(
            pixel=chosen.center_pixel,
            target_north=target_n, target_east=target_e,
            distance=distance, ticks=transit_ticks,
        )
        pose = pose.moved_to(target_n, target_e)
        tick += transit_ticks

        closeup_frame = render(pose, tick)
        rf = closeup_frame.rangefinder
        closeup_context = JudgeContext(scene=scene, frame=closeup_frame)

        if fallback:
            # exploration round: reposition only, confirmation waits a round
            action = "fallback"
            rounds.append(
                RoundOutcome(
                    index=round_index, action=action,
                    tick_start=tick_start, tick_end=tick,
                    pose_start=pose_start, pose_end=pose,
                    rangefinder_start=rf_start, rangefinder_end=rf,
                    candidates=candidates, ranking=ranking, move=move,
                    confirmation=None, frame_digest=digest, note=note,
                )
            )
            emit(round_event(rounds[-1]))
            continue

        closeup = _closeup_candidate(closeup_frame, config.context)
        try:
            confirmation = judge.evaluate(
                build_confirmation_request(closeup, round_index), closeup_context
            )
            judge_calls += 1
            confirmed = confirmation.confirmed
        except BackendUnavailable:
            raise
        except JudgeError as exc:
            judge_calls += 1
            confirmed = False
            note = f"confirmation failed: {exc}"

        if not confirmed:
            denials += 1
            denied_targets.append((pose.north, pose.east))
            action = "denied"
            rounds.append(
                RoundOutcome(
                    index=round_index, action=action,
                    tick_start=tick_start, tick_end=tick,
                    pose_start=pose_start, pose_end=pose,
                    rangefinder_start=rf_start, rangefinder_end=rf,
                    candidates=candidates, ranking=ranking, move=move,
                    confirmation=confirmation, frame_digest=digest, note=note,
                )
            )
            emit(round_event(rounds[-1]))
            continue

        if should_land(rf, config.land_threshold_m):
            tick += math.ceil(rf / config.vertical_speed)
            pose = pose.at_altitude(max(pose.altitude - rf, 0.0))
            classification = classify_touchdown(scene, pose.north, pose.east, tick)
            landing = LandingRecord(
                kind="confirmed", tick=tick, pose=pose,
                classification=classification, rounds_used=round_index,
            )
            action = "landed"
            rounds.append(
                RoundOutcome(
                    index=round_index, action=action,
                    tick_start=tick_start, tick_end=tick,
                    pose_start=pose_start, pose_end=pose,
                    rangefinder_start=rf_start, rangefinder_end=0.0,
                    candidates=candidates, ranking=ranking, move=move,
                    confirmation=confirmation, frame_digest=digest, note=note,
                )
            )
            emit(round_event(rounds[-1]))
            break

        drop = rf - descend_target(rf, config.fraction_k)
        tick += math.ceil(drop / config.vertical_speed)
        pose = pose.at_altitude(pose.altitude - drop)
        action = "descended" if distance <= scene.cell_size / 2 else "moved"
        rounds.append(
            RoundOutcome(
                index=round_index, action=action,
                tick_start=tick_start, tick_end=tick,
                pose_start=pose_start, pose_end=pose,
                rangefinder_start=rf_start, rangefinder_end=rf - drop,
                candidates=candidates, ranking=ranking, move=move,
                confirmation=confirmation, frame_digest=digest, note=note,
            )
        )
        emit(round_event(rounds[-1]))

    if landing is None:
        # battery margin exhausted: commit wherever the drone hovers
        rf = rounds[-1].rangefinder_end if rounds else -pose.down
        tick += math.ceil(max(rf, 0.0) / config.vertical_speed)
        pose = pose.at_altitude(max(pose.altitude - rf, 0.0))
        classification = classify_touchdown(scene, pose.north, pose.east, tick)
        landing = LandingRecord(
            kind="timeout_forced", tick=tick, pose=pose,
            classification=classification, rounds_used=config.max_rounds,
        )

    emit(landing_event(landing))
    result = EpisodeResult(
        scenario_id=scene.scenario_id,
        seed=seed,
        alert=alert,
        rounds=rounds,
        landing=landing,
        judge_calls=judge_calls,
        denials=denials,
    )
    emit(result_event(result))
    return result
