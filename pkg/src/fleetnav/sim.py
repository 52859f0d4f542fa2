"""Differential-drive simulation: lidar raycasting, kinematics, rewards, episodes.

The robot senses a 180-degree forward fan of 180 rays, compressed to 30
sector minima. One episode ends on goal arrival, collision, or the step
cap, never later.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .geometry import Circle, Pose2D, Rect, ray_box_exit, ray_circle, ray_rect, wrap_angle
from .world import CurriculumLevelSpec, WorldSpec, sample_world


@dataclass(frozen=True)
class SimParams:
    """Kinematic, sensing, and reward constants for the arena."""

    v_max: float = 1.0            # m/s
    omega_max: float = 1.0        # rad/s
    dt: float = 0.1               # s
    max_range: float = 10.0       # lidar clamp, m
    n_rays: int = 180
    n_sectors: int = 30
    d_thresh: float = 0.3         # goal-arrival distance, m
    c_thresh: float = 0.35        # collision distance, m
    max_steps: int = 250
    r_goal: float = 200.0
    r_collision: float = -100.0
    robot_radius: float = 0.25    # lidar footprint of other robots, m


DEFAULT_SIM = SimParams()


class Terminal(str, Enum):
    GOAL_REACHED = "goal_reached"
    COLLISION = "collision"
    TIMEOUT = "timeout"
    CONTINUE = "continue"


@dataclass(frozen=True)
class Observation:
    """The 34 scalars fed to the policy: 30 sector ranges + goal/motion state."""

    lidar30: np.ndarray
    d_goal: float
    theta_goal: float
    v: float
    omega: float

    def __post_init__(self) -> None:
        lid = np.asarray(self.lidar30, dtype=float)
        if lid.shape != (30,):
            raise ValueError(f"expected 30 lidar sectors, got shape {lid.shape}")
        object.__setattr__(self, "lidar30", lid)
        object.__setattr__(self, "d_goal", float(self.d_goal))
        object.__setattr__(self, "theta_goal", wrap_angle(self.theta_goal))
        object.__setattr__(self, "v", float(self.v))
        object.__setattr__(self, "omega", float(self.omega))

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.lidar30, [self.d_goal, self.theta_goal, self.v, self.omega]]
        )


@dataclass(frozen=True)
class Action:
    v_cmd: float
    omega_cmd: float


@dataclass(frozen=True)
class StepOutcome:
    reward: float
    terminal: Terminal


def raycast_lidar(
    world: WorldSpec,
    pose: Pose2D,
    sim: SimParams = DEFAULT_SIM,
    extra_circles: tuple[Circle, ...] = (),
) -> np.ndarray:
    """Cast the forward fan and return one clamped distance per ray.

    Rays sit at whole-degree offsets -90..+89 relative to the heading, so
    the central ray (index ``n_rays // 2``) points exactly forward. Other
    robots are passed in as ``extra_circles``.
    """
    if not (0.0 <= pose.x <= world.width and 0.0 <= pose.y <= world.height):
        raise ValueError(f"pose ({pose.x}, {pose.y}) outside arena")
    offsets = np.deg2rad(np.arange(sim.n_rays, dtype=float) - sim.n_rays // 2)
    angles = pose.theta + offsets
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    origin = (pose.x, pose.y)
    dist = ray_box_exit(origin, dirs, 0.0, 0.0, world.width, world.height)
    for ob in world.obstacles:
        if isinstance(ob, Rect):
            dist = np.minimum(dist, ray_rect(origin, dirs, ob))
        else:
            dist = np.minimum(dist, ray_circle(origin, dirs, ob))
    for c in extra_circles:
        dist = np.minimum(dist, ray_circle(origin, dirs, c))
    return np.minimum(dist, sim.max_range)


def compress_scan(scan: np.ndarray, n_sectors: int = 30) -> np.ndarray:
    """Minimum-pool the scan into ``n_sectors`` equal angular windows."""
    scan = np.asarray(scan, dtype=float)
    if scan.ndim != 1 or scan.size % n_sectors != 0:
        raise ValueError(f"scan of length {scan.size} does not split into {n_sectors} sectors")
    return scan.reshape(n_sectors, -1).min(axis=1)


def step_robot(pose: Pose2D, action: Action, dt: float) -> Pose2D:
    """Forward-Euler unicycle update; heading re-wrapped by Pose2D."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return Pose2D(
        pose.x + action.v_cmd * np.cos(pose.theta) * dt,
        pose.y + action.v_cmd * np.sin(pose.theta) * dt,
        pose.theta + action.omega_cmd * dt,
    )


def compute_reward(obs: Observation, action: Action, sim: SimParams = DEFAULT_SIM) -> StepOutcome:
    """Goal check first, then collision, else the per-step motion reward."""
    if obs.d_goal < sim.d_thresh:
        return StepOutcome(sim.r_goal, Terminal.GOAL_REACHED)
    if float(obs.lidar30.min()) < sim.c_thresh:
        return StepOutcome(sim.r_collision, Terminal.COLLISION)
    return StepOutcome(action.v_cmd - abs(action.omega_cmd), Terminal.CONTINUE)


class NavEnv:
    """Single-robot episode over a static world.

    Dynamic obstacles (other robots) can be injected per step via
    ``extra_circles``; they show up in the lidar only.
    """

    def __init__(
        self,
        world: WorldSpec,
        sim: SimParams = DEFAULT_SIM,
        robot_index: int = 0,
        goal_index: int = 0,
    ):
        if not world.spawns:
            raise ValueError("world has no robot spawns")
        if not world.goals:
            raise ValueError("world has no goals")
        self.world = world
        self.sim = sim
        self.pose = world.spawns[robot_index]
        self.target = world.goals[goal_index]
        self.steps = 0
        self.done = False
        self._v = 0.0
        self._omega = 0.0

    def set_target(self, xy: tuple[float, float]) -> None:
        self.target = (float(xy[0]), float(xy[1]))

    def observe(self, extra_circles: tuple[Circle, ...] = ()) -> Observation:
        scan = raycast_lidar(self.world, self.pose, self.sim, extra_circles)
        return Observation(
            compress_scan(scan, self.sim.n_sectors),
            self.pose.distance_to(*self.target),
            wrap_angle(self.pose.bearing_to(*self.target) - self.pose.theta),
            self._v,
            self._omega,
        )

    def step(
        self, action: Action, extra_circles: tuple[Circle, ...] = ()
    ) -> tuple[Observation, StepOutcome]:
        if self.done:
            raise RuntimeError("episode already terminated")
        applied = Action(
            float(np.clip(action.v_cmd, 0.0, self.sim.v_max)),
            float(np.clip(action.omega_cmd, -self.sim.omega_max, self.sim.omega_max)),
        )
        pose = step_robot(self.pose, applied, self.sim.dt)
        # collisions end episodes well before the wall; clamp defensively
        self.pose = Pose2D(
            float(np.clip(pose.x, 1e-9, self.world.width - 1e-9)),
            float(np.clip(pose.y, 1e-9, self.world.height - 1e-9)),
            pose.theta,
        )
        self.steps += 1
        self._v, self._omega = applied.v_cmd, applied.omega_cmd
        obs = self.observe(extra_circles)
        outcome = compute_reward(obs, applied, self.sim)
        if outcome.terminal is Terminal.CONTINUE and self.steps >= self.sim.max_steps:
            outcome = StepOutcome(outcome.reward, Terminal.TIMEOUT)
        self.done = outcome.terminal is not Terminal.CONTINUE
        return obs, outcome


def make_episode(level: CurriculumLevelSpec, seed: int, sim: SimParams = DEFAULT_SIM) -> NavEnv:
    """Build a fresh single-robot episode; a pure function of (level, seed)."""
    rng = np.random.default_rng(seed)
    world = sample_world(level, rng, n_robots=1, n_goals=1)
    return NavEnv(world, sim)


def reset_episode(
    level: CurriculumLevelSpec, seed: int, sim: SimParams = DEFAULT_SIM
) -> tuple[WorldSpec, Observation]:
    env = make_episode(level, seed, sim)
    return env.world, env.observe()


TRAJECTORY_COLUMNS = ("step", "robot_id", "x", "y", "theta", "v", "omega", "reward", "terminal")


def write_trajectory_csv(path, rows) -> None:
    """Write trajectory rows (tuples matching TRAJECTORY_COLUMNS)."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_COLUMNS)
        for row in rows:
            writer.writerow([str(v) for v in row])
