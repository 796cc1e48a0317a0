"""Two-stage landing judge: ranking of candidates, then close-up confirmation.

Two interchangeable backends speak the same request/verdict contract. The
oracle backend scores candidates against scene ground truth and is fully
deterministic; the remote backend talks to any chat-style multimodal
endpoint over JSON/HTTP. Prompt texts are loaded from versioned golden
files and must never be edited casually: a checksum test pins every byte.
The only templating allowed is the candidate-count slot in the ranking
prompt.
"""

from __future__ import annotations

import base64
import io
import json
import re
import time
from dataclasses import dataclass, field
from importlib import resources

import httpx
import numpy as np

from .errors import LandfallError
from .scene import (
    HARD_HAZARDS,
    RISKY_CLASSES,
    SceneModel,
    SurfaceClass,
    classify_touchdown,
)
from .sensors import SensorFrame, pixel_to_ground
from .surface_id import CandidateSurface, crop_to_rgb

LANDABLE_CLASSES = {
    SurfaceClass.ROOFTOP,
    SurfaceClass.SIDEWALK,
    SurfaceClass.GROUND,
    SurfaceClass.VEGETATION,
}

ENV_URL = "LANDFALL_JUDGE_URL"
ENV_MODEL = "LANDFALL_JUDGE_MODEL"
ENV_API_KEY = "LANDFALL_JUDGE_API_KEY"


class JudgeError(LandfallError):
    """Base for judge failures; the planner maps these to denials."""


class ParseError(JudgeError):
    def __init__(self, message: str, raw_text: str = ""):
        super().__init__(message)
        self.raw_text = raw_text


class BackendUnavailable(JudgeError):
    """Remote endpoint unreachable after retries; fail safe upstream."""


class MappingError(JudgeError):
    """A crop could not be mapped back to scene coordinates."""


# ---------- prompts ----------


def load_prompt(name: str) -> str:
    """Read one golden prompt file (system, ranking, confirmation)."""
    return resources.files("landfall.prompts").joinpath(f"{name}.txt").read_text()


def render_ranking_prompt(num_images: int) -> str:
    return load_prompt("ranking").replace("{num_images}", str(num_images))


# ---------- request / verdict ----------


@dataclass
class JudgeRequest:
    stage: str  # ranking | confirmation
    system_prompt: str
    user_prompt: str
    images: list[CandidateSurface]
    round_index: int


@dataclass
class JudgeVerdict:
    stage: str
    indices: tuple[int, ...]
    rationale: str
    latency_ms: float
    backend_id: str
    raw_text: str | None = None
    wire: dict | None = None  # verbatim request/reply for remote traffic

    @property
    def confirmed(self) -> bool:
        return self.stage == "confirmation" and self.indices == (1,)


def build_ranking_request(candidates: list[CandidateSurface], round_index: int) -> JudgeRequest:
    if not 1 <= len(candidates) <= 5:
        raise ValueError(f"ranking takes 1 to 5 candidates, got {len(candidates)}")
    return JudgeRequest(
        stage="ranking",
        system_prompt=load_prompt("system"),
        user_prompt=render_ranking_prompt(len(candidates)),
        images=list(candidates),
        round_index=round_index,
    )


def build_confirmation_request(closeup: CandidateSurface, round_index: int) -> JudgeRequest:
    return JudgeRequest(
        stage="confirmation",
        system_prompt=load_prompt("system"),
        user_prompt=load_prompt("confirmation"),
        images=[closeup],
        round_index=round_index,
    )


# ---------- reply parsing ----------

_BRACKET = re.compile(r"\[([^\[\]]*)\]")
_INT = re.compile(r"^[+-]?\d+$")


def parse_verdict(text: str, stage: str, n_images: int | None = None) -> tuple[int, ...]:
    """Extract the decision array from a judge reply.

    The last bracketed integer array in the text wins, so chain-of-thought
    mentioning earlier arrays is fine. Ranking arrays must be unique,
    in-range indices (a partial ranking is accepted); confirmation must be
    a single 0 or 1. Anything else raises ParseError with the raw text.
    """
    candidates = []
    for match in _BRACKET.finditer(text):
        tokens = [t.strip() for t in match.group(1).split(",")]
        if tokens and all(_INT.match(t) for t in tokens):
            candidates.append(tuple(int(t) for t in tokens))
    if not candidates:
        raise ParseError("no index array found in reply", raw_text=text)
    values = candidates[-1]

    if stage == "confirmation":
        if len(values) != 1 or values[0] not in (0, 1):
            raise ParseError(f"non-binary confirmation value {list(values)}", raw_text=text)
        return values

    if stage == "ranking":
        if n_images is None:
            raise ValueError("ranking parse requires n_images")
        if len(set(values)) != len(values):
            raise ParseError(f"duplicate index in ranking {list(values)}", raw_text=text)
        for idx in values:
            if not 0 <= idx < n_images:
                raise ParseError(
                    f"ranking index {idx} out of range for {n_images} images", raw_text=text
                )
        return values

    raise ValueError(f"unknown stage {stage!r}")


# ---------- oracle backend ----------


@dataclass
class JudgeContext:
    """Ground truth handed to the oracle; the remote backend ignores it."""

    scene: SceneModel
    frame: SensorFrame


def rank_key(safety_class: int, area: float, index: int) -> tuple[int, float, int]:
    """Sort key for oracle ranking: safety class desc, area desc, index asc.

    Scaling every area by one positive factor never reorders anything.
    """
    return (-safety_class, -area, index)


@dataclass
class OracleJudge:
    """Ground-truth judge standing in for a vision-language model.

    Ranking hard-rejects any candidate whose region contains agents,
    obstructions, water or edges; road/pier surfaces rank below safe ones;
    survivors order by flat area. Confirmation is exactly the touchdown
    classifier at the crop center.
    """

    clearance_radius: float = 2.0
    flatness_tolerance: float = 0.3
    backend_id: str = "oracle"

    def evaluate(self, request: JudgeRequest, context: JudgeContext) -> JudgeVerdict:
        if request.stage == "ranking":
            return self._rank(request, context)
        if request.stage == "confirmation":
            return self._confirm(request, context)
        raise ValueError(f"unknown stage {request.stage!r}")

    def _assess(self, cand: CandidateSurface, context: JudgeContext) -> tuple[int, float, str]:
        frame, scene = context.frame, context.scene
        u0, v0, u1, v1 = cand.bbox
        region = frame.classes[v0:v1, u0:u1]
        occupied = frame.occupied[v0:v1, u0:u1]

        present = {SurfaceClass(c) for c in np.unique(region)}
        hazard_bits = []
        if occupied.any():
            hazard_bits.append("moving agents")
        if present & HARD_HAZARDS:
            names = sorted(h.label for h in present & HARD_HAZARDS)
            hazard_bits.append("/".join(names))

        counts = np.bincount(region.ravel(), minlength=len(SurfaceClass))
        dominant = SurfaceClass(int(np.argmax(counts)))
        landable_px = int(
            np.sum(np.isin(region, [int(c) for c in LANDABLE_CLASSES]) & ~occupied)
        )
        area = float(cand.area_px if cand.origin == "detected" else landable_px)

        if hazard_bits:
            return 0, area, f"contains {', '.join(hazard_bits)}"
        center_u, center_v = cand.center_pixel
        north, east, _, in_grid = pixel_to_ground(scene, frame.pose, frame.intrinsics, (center_u, center_v))
        if not in_grid:
            raise MappingError(f"candidate center pixel ({center_u}, {center_v}) maps outside the scene")
        touchdown = classify_touchdown(
            scene, north, east, frame.tick, self.clearance_radius, self.flatness_tolerance
        )
        if dominant in RISKY_CLASSES:
            return 1, area, f"{dominant.label} surface, lowest risk only"
        if not touchdown.safe:
            return 1, area, f"{dominant.label} but {'; '.join(touchdown.reasons)}"
        return 2, area, f"clear {dominant.label}"

    def _rank(self, request: JudgeRequest, context: JudgeContext) -> JudgeVerdict:
        assessed = []
        for cand in request.images:
            try:
                assessed.append(self._assess(cand, context))
            except MappingError:
                # unmappable candidate: unknown ground, rank with the hazards
                assessed.append((0, 0.0, "maps outside the scene"))
        order = sorted(
            range(len(assessed)),
            key=lambda i: rank_key(assessed[i][0], assessed[i][1], i),
        )
        top = order[0]
        top_class, _, top_note = assessed[top]
        if len(request.images) == 1:
            rationale = f"sole option available: {top_note}"
        elif top_class == 2:
            rationale = f"candidate {top} first: largest {top_note}"
        elif top_class == 1:
            rationale = f"no fully safe surface in view; candidate {top} is lowest risk ({top_note})"
        else:
            rationale = f"all candidates hazardous; candidate {top} least bad ({top_note})"
        return JudgeVerdict(
            stage="ranking",
            indices=tuple(order),
            rationale=rationale,
            latency_ms=0.0,
            backend_id=self.backend_id,
        )

    def _confirm(self, request: JudgeRequest, context: JudgeContext) -> JudgeVerdict:
        cand = request.images[0]
        center_u, center_v = cand.center_pixel
        frame, scene = context.frame, context.scene
        north, east, _, in_grid = pixel_to_ground(scene, frame.pose, frame.intrinsics, (center_u, center_v))
        if not in_grid:
            raise MappingError(f"close-up center pixel ({center_u}, {center_v}) maps outside the scene")
        touchdown = classify_touchdown(
            scene, north, east, frame.tick, self.clearance_radius, self.flatness_tolerance
        )
        if touchdown.safe:
            rationale = f"touchdown clear: flat {touchdown.surface_class.label}, no hazards in clearance"
            indices = (1,)
        else:
            rationale = "denied: " + "; ".join(touchdown.reasons)
            indices = (0,)
        return JudgeVerdict(
            stage="confirmation",
            indices=indices,
            rationale=rationale,
            latency_ms=0.0,
            backend_id=self.backend_id,
        )


# ---------- remote backend ----------


def _png_data_url(rgb: np.ndarray) -> str:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(rgb).save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


@dataclass
class RemoteJudge:
    """Chat-completion client for a multimodal endpoint.

    Endpoint, model and API key come only from environment variables
    (LANDFALL_JUDGE_URL, LANDFALL_JUDGE_MODEL, LANDFALL_JUDGE_API_KEY);
    credentials never travel through flags or files. Transient failures
    retry twice with exponential backoff, then raise BackendUnavailable.
    """

    base_url: str | None = None
    model: str | None = None
    api_key: str | None = None
    timeout_s: float = 60.0
    retries: int = 2
    backoff_s: float = 0.5
    transport: httpx.BaseTransport | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        import os

        if self.base_url is None:
            self.base_url = os.environ.get(ENV_URL)
        if self.model is None:
            self.model = os.environ.get(ENV_MODEL, "judge-model")
        if self.api_key is None:
            self.api_key = os.environ.get(ENV_API_KEY)
        if not self.base_url:
            raise BackendUnavailable(f"no judge endpoint configured; set {ENV_URL}")

    @property
    def backend_id(self) -> str:
        return self.model or "remote"

    def _payload(self, request: JudgeRequest) -> dict:
        content: list[dict] = [{"type": "text", "text": request.user_prompt}]
        for cand in request.images:
            content.append(
                {
                    "type": "image_url",
                    "image_url": {"url": _png_data_url(crop_to_rgb(cand.crop))},
                }
            )
        return {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": content},
            ],
        }

    def evaluate(self, request: JudgeRequest, context: JudgeContext | None = None) -> JudgeVerdict:
        payload = self._payload(request)
        url = self.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        started = time.monotonic()
        reply = self._post_with_retries(url, payload, headers)
        latency_ms = (time.monotonic() - started) * 1000.0

        try:
            body = reply.json()
            message = body["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise ParseError(f"malformed chat-completion reply: {exc}", raw_text=reply.text) from exc
        if isinstance(message, list):  # some endpoints return content parts
            message = "".join(p.get("text", "") for p in message if isinstance(p, dict))

        n_images = len(request.images) if request.stage == "ranking" else None
        indices = parse_verdict(message, request.stage, n_images)
        return JudgeVerdict(
            stage=request.stage,
            indices=indices,
            rationale=message,
            latency_ms=latency_ms,
            backend_id=str(body.get("model", self.backend_id)),
            raw_text=message,
            wire={"request": payload, "reply": body},
        )

    def _post_with_retries(self, url: str, payload: dict, headers: dict) -> httpx.Response:
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt and self.backoff_s > 0:
                time.sleep(self.backoff_s * (2 ** (attempt - 1)))
            try:
                with httpx.Client(transport=self.transport, timeout=self.timeout_s) as client:
                    response = client.post(url, json=payload, headers=headers)
                if response.status_code >= 500:
                    last_error = BackendUnavailable(f"server error {response.status_code}")
                    continue
                if response.status_code >= 400:
                    raise BackendUnavailable(
                        f"judge endpoint rejected the request: {response.status_code}"
                    )
                return response
            except (httpx.TransportError, httpx.TimeoutException) as exc:
                last_error = exc
        raise BackendUnavailable(f"judge endpoint unreachable after {self.retries + 1} attempts: {last_error}")
