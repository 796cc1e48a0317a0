"""Scene model: tiled urban world, dynamic agents, touchdown classification.

Scenes are tile grids. Cell (i, j) covers north in [i*cell, (i+1)*cell)
and east in [j*cell, (j+1)*cell); i runs north, j runs east. Each cell has
one surface class and one elevation in meters (>= 0, ground datum 0).

Scene files are plain text, versioned. Grammar (one declaration per line,
'#' starts a comment, blank lines ignored):

    landfall-scene v1
    name <scenario-id>
    grid <width> <height>          cells east x cells north
    cell <size_m>
    seed <int>
    char <symbol> <class> <elevation_m>
    map                            <height> rows follow, northmost first
    <row of <width> symbols>
    endmap
    agent <vehicle|pedestrian> speed=<int> footprint=<int> path=<i,j>;<i,j>;...
    mark <name> <i0> <j0> <i1> <j1>   inclusive cell rect
    launch <north_m> <east_m> <altitude_m> [yaw_rad]

Every map symbol must be declared by a `char` line, which is how per-cell
elevations are expressed. The loader rejects unknown versions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import ConfigError, OutOfBoundsError


class SurfaceClass(IntEnum):
    ROOFTOP = 0
    ROOFTOP_OBSTACLE = 1
    ROAD = 2
    SIDEWALK = 3
    PIER = 4
    WATER = 5
    GROUND = 6
    VEGETATION = 7
    WALL_EDGE = 8

    @classmethod
    def from_name(cls, name: str) -> "SurfaceClass":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ConfigError(f"unknown surface class {name!r}") from None

    @property
    def label(self) -> str:
        return self.name.lower()


# hard hazards reject a touchdown outright; risky classes are flat but unfit
HARD_HAZARDS = {SurfaceClass.ROOFTOP_OBSTACLE, SurfaceClass.WATER, SurfaceClass.WALL_EDGE}
RISKY_CLASSES = {SurfaceClass.ROAD, SurfaceClass.PIER}

AGENT_KINDS = ("vehicle", "pedestrian")
AGENT_HEIGHT_M = {"vehicle": 1.8, "pedestrian": 1.7}
LEGAL_AGENT_CELLS = {
    "vehicle": {SurfaceClass.ROAD},
    "pedestrian": {SurfaceClass.SIDEWALK, SurfaceClass.GROUND},
}


@dataclass
class DynamicAgent:
    kind: str
    path: list[tuple[int, int]]  # (i, j) grid cells, wrap-around
    speed: int = 1  # cells per tick
    footprint: int = 0  # Chebyshev cell radius

    def __post_init__(self) -> None:
        if self.kind not in AGENT_KINDS:
            raise ConfigError(f"unknown agent kind {self.kind!r}")
        if not self.path:
            raise ConfigError("agent path is empty")
        if self.speed < 0 or self.footprint < 0:
            raise ConfigError("agent speed and footprint must be non-negative")

    def center_at(self, tick: int) -> tuple[int, int]:
        """Path cell occupied at a tick; paths wrap around."""
        if tick < 0:
            raise ValueError(f"tick must be non-negative, got {tick}")
        return self.path[(tick * self.speed) % len(self.path)]


@dataclass
class SceneModel:
    scenario_id: str
    grid_width: int  # cells along east
    grid_height: int  # cells along north
    cell_size: float
    elevation: np.ndarray  # (grid_height, grid_width) float64, meters
    classes: np.ndarray  # (grid_height, grid_width) uint8 SurfaceClass codes
    agents: list[DynamicAgent] = field(default_factory=list)
    rng_seed: int = 0
    marks: dict[str, tuple[int, int, int, int]] = field(default_factory=dict)
    launch: tuple[float, float, float, float] | None = None  # north, east, altitude, yaw

    def __post_init__(self) -> None:
        if self.grid_width <= 0 or self.grid_height <= 0:
            raise ConfigError("grid dimensions must be positive")
        if self.cell_size <= 0:
            raise ConfigError("cell_size must be positive")
        shape = (self.grid_height, self.grid_width)
        if self.elevation.shape != shape or self.classes.shape != shape:
            raise ConfigError(f"grid arrays must have shape {shape}")
        if np.any(self.elevation < 0):
            raise ConfigError("cell elevations must be >= 0")
        water = self.classes == SurfaceClass.WATER
        if np.any(self.elevation[water] != 0):
            raise ConfigError("water cells must have elevation 0")
        for agent in self.agents:
            legal = LEGAL_AGENT_CELLS[agent.kind]
            for (i, j) in agent.path:
                if not (0 <= i < self.grid_height and 0 <= j < self.grid_width):
                    raise ConfigError(f"agent path cell ({i}, {j}) out of bounds")
                if SurfaceClass(self.classes[i, j]) not in legal:
                    raise ConfigError(
                        f"{agent.kind} path cell ({i}, {j}) is "
                        f"{SurfaceClass(self.classes[i, j]).label}, not a legal surface"
                    )

    # ---------- world/grid mapping ----------

    @property
    def north_extent(self) -> float:
        return self.grid_height * self.cell_size

    @property
    def east_extent(self) -> float:
        return self.grid_width * self.cell_size

    def contains(self, north: float, east: float) -> bool:
        return 0 <= north < self.north_extent and 0 <= east < self.east_extent

    def cell_at(self, north: float, east: float) -> tuple[int, int]:
        if not self.contains(north, east):
            raise OutOfBoundsError(f"point ({north:.2f}, {east:.2f}) outside scene")
        return int(north // self.cell_size), int(east // self.cell_size)

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        return (i + 0.5) * self.cell_size, (j + 0.5) * self.cell_size

    def mark_world_rect(self, name: str) -> tuple[float, float, float, float]:
        """A mark's inclusive cell rect as (n0, e0, n1, e1) world bounds."""
        i0, j0, i1, j1 = self.marks[name]
        c = self.cell_size
        return i0 * c, j0 * c, (i1 + 1) * c, (j1 + 1) * c

    def launchable_rect(self) -> tuple[float, float, float, float]:
        """Area batch launches sample from: `launchable` mark, else a one-cell inset."""
        if "launchable" in self.marks:
            return self.mark_world_rect("launchable")
        c = self.cell_size
        return c, c, self.north_extent - c, self.east_extent - c


# ---------- agents ----------


@dataclass(frozen=True)
class AgentState:
    agent: DynamicAgent
    center: tuple[int, int]
    occupied: tuple[tuple[int, int], ...]


def step_agents(scene: SceneModel, tick: int) -> list[AgentState]:
    """Agent centers and occupied cells at a tick.

    Occupancy is the footprint neighborhood clipped to the grid and to the
    agent's legal surface classes, so vehicles never occupy a sidewalk cell
    even when their footprint brushes one.
    """
    states = []
    for agent in scene.agents:
        ci, cj = agent.center_at(tick)
        legal = LEGAL_AGENT_CELLS[agent.kind]
        cells = []
        r = agent.footprint
        for i in range(max(0, ci - r), min(scene.grid_height, ci + r + 1)):
            for j in range(max(0, cj - r), min(scene.grid_width, cj + r + 1)):
                if SurfaceClass(scene.classes[i, j]) in legal:
                    cells.append((i, j))
        states.append(AgentState(agent=agent, center=(ci, cj), occupied=tuple(cells)))
    return states


def agent_grids(scene: SceneModel, tick: int) -> tuple[np.ndarray, np.ndarray]:
    """Boolean occupancy grid and additive height grid for rendering."""
    occupied = np.zeros((scene.grid_height, scene.grid_width), dtype=bool)
    height = np.zeros((scene.grid_height, scene.grid_width), dtype=np.float64)
    for state in step_agents(scene, tick):
        h = AGENT_HEIGHT_M[state.agent.kind]
        for (i, j) in state.occupied:
            occupied[i, j] = True
            height[i, j] = max(height[i, j], h)
    return occupied, height


# ---------- touchdown classification ----------


@dataclass(frozen=True)
class LandingClassification:
    surface_class: SurfaceClass
    safe: bool
    reasons: tuple[str, ...] = ()


def clearance_cells(
    scene: SceneModel, north: float, east: float, radius: float
) -> list[tuple[int, int]]:
    """Cells whose rect comes within radius of the point (closest-point metric)."""
    c = scene.cell_size
    i_lo = max(0, int(math.floor((north - radius) / c)))
    i_hi = min(scene.grid_height - 1, int(math.floor((north + radius) / c)))
    j_lo = max(0, int(math.floor((east - radius) / c)))
    j_hi = min(scene.grid_width - 1, int(math.floor((east + radius) / c)))
    cells = []
    for i in range(i_lo, i_hi + 1):
        for j in range(j_lo, j_hi + 1):
            dn = max(i * c - north, 0.0, north - (i + 1) * c)
            de = max(j * c - east, 0.0, east - (j + 1) * c)
            if math.hypot(dn, de) <= radius:
                cells.append((i, j))
    return cells


def classify_touchdown(
    scene: SceneModel,
    north: float,
    east: float,
    tick: int,
    clearance_radius: float = 2.0,
    flatness_tolerance: float = 0.3,
) -> LandingClassification:
    """Ground-truth verdict for a touchdown point at a tick.

    Safe iff the clearance neighborhood is flat within tolerance, free of
    obstruction/edge/water cells and of agents, and the landing cell class
    is neither road nor pier.
    """
    li, lj = scene.cell_at(north, east)  # raises OutOfBoundsError
    landing_class = SurfaceClass(scene.classes[li, lj])
    cells = clearance_cells(scene, north, east, clearance_radius)

    reasons = []
    elevs = [scene.elevation[i, j] for (i, j) in cells]
    if max(elevs) - min(elevs) > flatness_tolerance:
        reasons.append("uneven terrain within clearance radius")
    present = {SurfaceClass(scene.classes[i, j]) for (i, j) in cells}
    if SurfaceClass.ROOFTOP_OBSTACLE in present:
        reasons.append("obstruction within clearance radius")
    if SurfaceClass.WALL_EDGE in present:
        reasons.append("edge within clearance radius")
    if SurfaceClass.WATER in present:
        reasons.append("water within clearance radius")
    occupied_cells = set()
    for state in step_agents(scene, tick):
        occupied_cells.update(state.occupied)
    hit = occupied_cells.intersection(cells)
    if hit:
        kinds = sorted(
            {s.agent.kind for s in step_agents(scene, tick) if set(s.occupied) & set(cells)}
        )
        reasons.append(f"{'/'.join(kinds)} within clearance radius")
    if landing_class in RISKY_CLASSES:
        reasons.append(f"surface class {landing_class.label} unsuitable")

    return LandingClassification(
        surface_class=landing_class, safe=not reasons, reasons=tuple(reasons)
    )


# ---------- scene file loader ----------

SCENE_FORMAT_VERSION = "landfall-scene v1"


def load_scene(source: str | Path) -> SceneModel:
    """Parse a scene file (path or literal text). Rejects unknown versions."""
    if isinstance(source, Path):
        text = source.read_text()
        default_id = source.stem
    elif "\n" not in source and source.endswith(".scene"):
        p = Path(source)
        text = p.read_text()
        default_id = p.stem
    else:
        text = str(source)
        default_id = "scene"
    return parse_scene_text(text, default_id)


def _strip(line: str) -> str:
    if "#" in line:
        line = line[: line.index("#")]
    return line.strip()


def parse_scene_text(text: str, default_id: str = "scene") -> SceneModel:
    lines = text.splitlines()
    cursor = 0

    def next_meaningful() -> tuple[int, str] | None:
        nonlocal cursor
        while cursor < len(lines):
            stripped = _strip(lines[cursor])
            cursor += 1
            if stripped:
                return cursor - 1, stripped
        return None

    first = next_meaningful()
    if first is None:
        raise ConfigError("empty scene file")
    if first[1] != SCENE_FORMAT_VERSION:
        raise ConfigError(
            f"unsupported scene format {first[1]!r}, expected {SCENE_FORMAT_VERSION!r}"
        )

    name = default_id
    width = height = None
    cell = None
    seed = 0
    chars: dict[str, tuple[SurfaceClass, float]] = {}
    map_rows: list[str] | None = None
    agents: list[DynamicAgent] = []
    marks: dict[str, tuple[int, int, int, int]] = {}
    launch: tuple[float, float, float, float] | None = None

    while True:
        item = next_meaningful()
        if item is None:
            break
        lineno, line = item
        fields = line.split()
        kw = fields[0]
        try:
            if kw == "name" and len(fields) == 2:
                name = fields[1]
            elif kw == "grid" and len(fields) == 3:
                width, height = int(fields[1]), int(fields[2])
            elif kw == "cell" and len(fields) == 2:
                cell = float(fields[1])
            elif kw == "seed" and len(fields) == 2:
                seed = int(fields[1])
            elif kw == "char" and len(fields) == 4:
                symbol = fields[1]
                if len(symbol) != 1:
                    raise ConfigError(f"char symbol must be one character, got {symbol!r}")
                chars[symbol] = (SurfaceClass.from_name(fields[2]), float(fields[3]))
            elif kw == "map" and len(fields) == 1:
                if width is None or height is None:
                    raise ConfigError("map block before grid declaration")
                map_rows = []
                while True:
                    row_item = next_meaningful()
                    if row_item is None:
                        raise ConfigError("map block not closed with endmap")
                    if row_item[1] == "endmap":
                        break
                    map_rows.append(row_item[1])
            elif kw == "agent":
                agents.append(_parse_agent(fields[1:], lineno))
            elif kw == "mark" and len(fields) == 6:
                marks[fields[1]] = (
                    int(fields[2]),
                    int(fields[3]),
                    int(fields[4]),
                    int(fields[5]),
                )
            elif kw == "launch" and len(fields) in (4, 5):
                yaw = float(fields[4]) if len(fields) == 5 else 0.0
                launch = (float(fields[1]), float(fields[2]), float(fields[3]), yaw)
            else:
                raise ConfigError(f"unrecognized declaration {line!r}")
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"scene line {lineno + 1}: {exc}") from exc

    if width is None or height is None or cell is None:
        raise ConfigError("scene must declare grid and cell size")
    if map_rows is None:
        raise ConfigError("scene must contain a map block")
    if len(map_rows) != height:
        raise ConfigError(f"map has {len(map_rows)} rows, grid declares {height}")

    elevation = np.zeros((height, width), dtype=np.float64)
    classes = np.zeros((height, width), dtype=np.uint8)
    for r, row in enumerate(map_rows):
        if len(row) != width:
            raise ConfigError(f"map row {r + 1} has {len(row)} symbols, grid declares {width}")
        i = height - 1 - r  # first map row is the northmost
        for j, symbol in enumerate(row):
            if symbol not in chars:
                raise ConfigError(f"map symbol {symbol!r} not declared by a char line")
            cls, elev = chars[symbol]
            classes[i, j] = int(cls)
            elevation[i, j] = elev

    for mark_name, (i0, j0, i1, j1) in marks.items():
        if not (0 <= i0 <= i1 < height and 0 <= j0 <= j1 < width):
            raise ConfigError(f"mark {mark_name!r} rect out of bounds")

    scene = SceneModel(
        scenario_id=name,
        grid_width=width,
        grid_height=height,
        cell_size=cell,
        elevation=elevation,
        classes=classes,
        agents=agents,
        rng_seed=seed,
        marks=marks,
        launch=launch,
    )
    if launch is not None:
        n, e, alt, _ = launch
        i, j = scene.cell_at(n, e)  # raises if outside
        if alt <= scene.elevation[i, j]:
            raise ConfigError(f"launch altitude {alt} not above terrain ({scene.elevation[i, j]})")
    return scene


def _parse_agent(fields: list[str], lineno: int) -> DynamicAgent:
    if not fields:
        raise ConfigError(f"scene line {lineno + 1}: agent kind missing")
    kind = fields[0]
    speed, footprint, path = 1, 0, None
    for token in fields[1:]:
        if "=" not in token:
            raise ConfigError(f"scene line {lineno + 1}: bad agent token {token!r}")
        key, value = token.split("=", 1)
        if key == "speed":
            speed = int(value)
        elif key == "footprint":
            footprint = int(value)
        elif key == "path":
            path = []
            for pair in value.split(";"):
                i_s, j_s = pair.split(",")
                path.append((int(i_s), int(j_s)))
        else:
            raise ConfigError(f"scene line {lineno + 1}: unknown agent key {key!r}")
    if path is None:
        raise ConfigError(f"scene line {lineno + 1}: agent needs a path")
    return DynamicAgent(kind=kind, path=path, speed=speed, footprint=footprint)
