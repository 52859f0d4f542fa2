"""World construction: arena spec, curriculum levels, seeded sampling, JSON IO.

A world is static for the duration of an episode. Sampling is a pure
function of (level spec, rng state): the same seed always reproduces the
same world.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Circle, Obstacle, Pose2D, Rect

WALL_MARGIN = 0.5           # entities keep this far from arena walls
OBSTACLE_CLEARANCE = 0.6    # entities keep this far from obstacle boundaries
SPAWN_SEPARATION = 0.7      # 2x collision threshold between robot spawns
POINT_SEPARATION = 0.5      # between goals/homes and other sampled points
MAX_SAMPLE_TRIES = 1000


class WorldConfigError(ValueError):
    """Raised when a world cannot be built or validated."""


@dataclass(frozen=True)
class CurriculumLevelSpec:
    """One difficulty rung: obstacle layout and goal spawn distance."""

    level: int
    n_obstacles: tuple[int, int]      # inclusive range; ignored for fixed layouts
    random_obstacles: bool            # False -> FIXED_OBSTACLES layout
    max_goal_distance: float          # meters from the robot spawn
    min_goal_distance: float = 1.0
    advance_threshold: float = 0.7    # trailing success rate to move up


# Fixed sparse layout used by the first level: two pillars and two blocks
# around the middle of the default 10x10 arena.
FIXED_OBSTACLES: tuple[Obstacle, ...] = (
    Circle(3.0, 3.0, 0.4),
    Circle(7.0, 7.0, 0.4),
    Rect(2.6, 6.4, 3.6, 7.4),
    Rect(6.4, 2.6, 7.4, 3.6),
)

LEVEL1 = CurriculumLevelSpec(1, (4, 4), False, 3.0)
LEVEL2 = CurriculumLevelSpec(2, (4, 6), True, 5.0)
LEVEL3 = CurriculumLevelSpec(3, (5, 8), True, 8.0)
DEFAULT_CURRICULUM: tuple[CurriculumLevelSpec, ...] = (LEVEL1, LEVEL2, LEVEL3)


@dataclass(frozen=True)
class WorldSpec:
    """Static arena contents. Validated on construction."""

    width: float
    height: float
    obstacles: tuple[Obstacle, ...]
    goals: tuple[tuple[float, float], ...]
    homes: tuple[tuple[float, float], ...]
    spawns: tuple[Pose2D, ...]

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise WorldConfigError("arena dimensions must be positive")
        for label, pts in (
            ("goal", self.goals),
            ("home", self.homes),
            ("spawn", [(p.x, p.y) for p in self.spawns]),
        ):
            for x, y in pts:
                if not (0.0 <= x <= self.width and 0.0 <= y <= self.height):
                    raise WorldConfigError(f"{label} ({x}, {y}) outside arena")
                for ob in self.obstacles:
                    if ob.distance_from(x, y) <= 0.0:
                        raise WorldConfigError(f"{label} ({x}, {y}) inside obstacle {ob}")
        for i in range(len(self.spawns)):
            for j in range(i + 1, len(self.spawns)):
                a, b = self.spawns[i], self.spawns[j]
                if math.hypot(a.x - b.x, a.y - b.y) < SPAWN_SEPARATION:
                    raise WorldConfigError(f"spawns {i} and {j} closer than {SPAWN_SEPARATION} m")

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)


def _point_clear(x, y, width, height, obstacles, taken, min_sep) -> bool:
    if not (WALL_MARGIN <= x <= width - WALL_MARGIN and WALL_MARGIN <= y <= height - WALL_MARGIN):
        return False
    if any(ob.distance_from(x, y) < OBSTACLE_CLEARANCE for ob in obstacles):
        return False
    return all(math.hypot(x - tx, y - ty) >= min_sep for tx, ty in taken)


def _sample_point(rng, width, height, obstacles, taken, min_sep, label):
    for _ in range(MAX_SAMPLE_TRIES):
        x = rng.uniform(WALL_MARGIN, width - WALL_MARGIN)
        y = rng.uniform(WALL_MARGIN, height - WALL_MARGIN)
        if _point_clear(x, y, width, height, obstacles, taken, min_sep):
            return x, y
    raise WorldConfigError(f"could not place {label} after {MAX_SAMPLE_TRIES} tries")


def _sample_near(rng, cx, cy, r_min, r_max, width, height, obstacles, taken, min_sep, label):
    """Uniform point in the annulus [r_min, r_max] around (cx, cy), validity-checked."""
    for _ in range(MAX_SAMPLE_TRIES):
        r = math.sqrt(rng.uniform(r_min ** 2, r_max ** 2))
        phi = rng.uniform(-math.pi, math.pi)
        x, y = cx + r * math.cos(phi), cy + r * math.sin(phi)
        if _point_clear(x, y, width, height, obstacles, taken, min_sep):
            return x, y
    raise WorldConfigError(f"could not place {label} after {MAX_SAMPLE_TRIES} tries")


def _sample_obstacles(level: CurriculumLevelSpec, rng, width, height) -> tuple[Obstacle, ...]:
    if not level.random_obstacles:
        return FIXED_OBSTACLES
    lo, hi = level.n_obstacles
    count = int(rng.integers(lo, hi + 1))
    out: list[Obstacle] = []
    for _ in range(count):
        cx = rng.uniform(1.5, width - 1.5)
        cy = rng.uniform(1.5, height - 1.5)
        if rng.random() < 0.5:
            out.append(Circle(cx, cy, rng.uniform(0.2, 0.6)))
        else:
            hx = rng.uniform(0.2, 0.6)
            hy = rng.uniform(0.2, 0.6)
            out.append(Rect(cx - hx, cy - hy, cx + hx, cy + hy))
    return tuple(out)


def sample_world(
    level: CurriculumLevelSpec,
    rng: np.random.Generator,
    *,
    n_robots: int = 1,
    n_goals: int | None = None,
    n_homes: int = 0,
    width: float = 10.0,
    height: float = 10.0,
    goal_near_spawn: bool = True,
) -> WorldSpec:
    """Sample a world from the level's distribution.

    With ``goal_near_spawn`` (single-robot training), goal ``j`` is placed
    within the level's distance band of spawn ``j``; otherwise goals are
    uniform over the free space.
    """
    if n_goals is None:
        n_goals = n_robots
    obstacles = _sample_obstacles(level, rng, width, height)

    spawns: list[Pose2D] = []
    spawn_pts: list[tuple[float, float]] = []
    for i in range(n_robots):
        x, y = _sample_point(rng, width, height, obstacles, spawn_pts, SPAWN_SEPARATION, f"spawn {i}")
        spawns.append(Pose2D(x, y, rng.uniform(-math.pi, math.pi)))
        spawn_pts.append((x, y))

    taken = list(spawn_pts)
    goals: list[tuple[float, float]] = []
    for j in range(n_goals):
        if goal_near_spawn and j < len(spawn_pts):
            gx, gy = _sample_near(
                rng, spawn_pts[j][0], spawn_pts[j][1],
                level.min_goal_distance, level.max_goal_distance,
                width, height, obstacles, taken, POINT_SEPARATION, f"goal {j}",
            )
        else:
            gx, gy = _sample_point(rng, width, height, obstacles, taken, POINT_SEPARATION, f"goal {j}")
        goals.append((gx, gy))
        taken.append((gx, gy))

    homes: list[tuple[float, float]] = []
    for k in range(n_homes):
        hx, hy = _sample_point(rng, width, height, obstacles, taken, POINT_SEPARATION, f"home {k}")
        homes.append((hx, hy))
        taken.append((hx, hy))

    return WorldSpec(width, height, obstacles, tuple(goals), tuple(homes), tuple(spawns))


def obstacle_to_dict(ob: Obstacle) -> dict:
    if isinstance(ob, Rect):
        return {"type": "rect", "x0": ob.x0, "y0": ob.y0, "x1": ob.x1, "y1": ob.y1}
    return {"type": "circle", "cx": ob.cx, "cy": ob.cy, "r": ob.r}


def obstacle_from_dict(d: dict) -> Obstacle:
    kind = d.get("type")
    if kind == "rect":
        return Rect(d["x0"], d["y0"], d["x1"], d["y1"])
    if kind == "circle":
        return Circle(d["cx"], d["cy"], d["r"])
    raise WorldConfigError(f"unknown obstacle type: {kind!r}")


def world_to_dict(w: WorldSpec) -> dict:
    return {
        "width": w.width,
        "height": w.height,
        "obstacles": [obstacle_to_dict(ob) for ob in w.obstacles],
        "goals": [list(g) for g in w.goals],
        "homes": [list(h) for h in w.homes],
        "spawns": [[p.x, p.y, p.theta] for p in w.spawns],
    }


def world_from_dict(d: dict) -> WorldSpec:
    return WorldSpec(
        width=float(d["width"]),
        height=float(d["height"]),
        obstacles=tuple(obstacle_from_dict(o) for o in d.get("obstacles", [])),
        goals=tuple((float(x), float(y)) for x, y in d.get("goals", [])),
        homes=tuple((float(x), float(y)) for x, y in d.get("homes", [])),
        spawns=tuple(Pose2D(*s) for s in d.get("spawns", [])),
    )


def save_world(path, w: WorldSpec) -> None:
    Path(path).write_text(json.dumps(world_to_dict(w), indent=2, sort_keys=True))


def load_world(path) -> WorldSpec:
    return world_from_dict(json.loads(Path(path).read_text()))
