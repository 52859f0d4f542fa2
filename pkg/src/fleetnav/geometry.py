"""Planar geometry: poses, obstacle shapes, and ray-intersection helpers.

Distances are meters, angles radians. Ray helpers are vectorized over a
bundle of unit direction vectors and return one distance per ray, with
``np.inf`` marking a miss.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta):
    """Wrap an angle (or array of angles) into (-pi, pi]."""
    wrapped = np.pi - np.remainder(np.pi - np.asarray(theta, dtype=float), TWO_PI)
    if np.ndim(theta) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class Pose2D:
    """Planar pose; ``theta`` is re-wrapped into (-pi, pi] on construction."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def distance_to(self, x: float, y: float) -> float:
        return math.hypot(x - self.x, y - self.y)

    def bearing_to(self, x: float, y: float) -> float:
        """World-frame angle of the segment from this pose to (x, y)."""
        return math.atan2(y - self.y, x - self.x)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle with corners (x0, y0) and (x1, y1)."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self) -> None:
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError(f"degenerate rectangle: {self}")

    def distance_from(self, x: float, y: float) -> float:
        """Euclidean distance from a point to this rectangle (0 inside)."""
        dx = max(self.x0 - x, 0.0, x - self.x1)
        dy = max(self.y0 - y, 0.0, y - self.y1)
        return math.hypot(dx, dy)


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    r: float

    def __post_init__(self) -> None:
        if self.r <= 0:
            raise ValueError(f"non-positive radius: {self}")

    def distance_from(self, x: float, y: float) -> float:
        return max(math.hypot(x - self.cx, y - self.cy) - self.r, 0.0)


Obstacle = Union[Rect, Circle]


def ray_box_exit(origin, dirs, x0, y0, x1, y1):
    """Exit distances for rays starting inside the box [x0,x1] x [y0,y1]."""
    ox, oy = origin
    dx, dy = dirs[:, 0], dirs[:, 1]
    with np.errstate(divide="ignore"):
        tx = np.where(dx > 0, (x1 - ox) / dx, np.where(dx < 0, (x0 - ox) / dx, np.inf))
        ty = np.where(dy > 0, (y1 - oy) / dy, np.where(dy < 0, (y0 - oy) / dy, np.inf))
    return np.maximum(np.minimum(tx, ty), 0.0)


def _slab(coord: float, d, lo: float, hi: float):
    """Per-ray (near, far) parameter interval for one slab axis."""
    zero = d == 0.0
    safe = np.where(zero, 1.0, d)
    t1 = (lo - coord) / safe
    t2 = (hi - coord) / safe
    inside = lo <= coord <= hi
    near = np.where(zero, -np.inf if inside else np.inf, np.minimum(t1, t2))
    far = np.where(zero, np.inf if inside else -np.inf, np.maximum(t1, t2))
    return near, far


def ray_rect(origin, dirs, rect: Rect):
    """Entry distances for rays hitting a rectangle (slab test); 0 if inside."""
    ox, oy = origin
    txn, txf = _slab(ox, dirs[:, 0], rect.x0, rect.x1)
    tyn, tyf = _slab(oy, dirs[:, 1], rect.y0, rect.y1)
    t_near = np.maximum(txn, tyn)
    t_far = np.minimum(txf, tyf)
    hit = (t_near <= t_far) & (t_far >= 0.0)
    return np.where(hit, np.maximum(t_near, 0.0), np.inf)


def ray_circle(origin, dirs, circle: Circle):
    """Entry distances for rays hitting a circle; 0 if the origin is inside."""
    ox, oy = origin
    fx = ox - circle.cx
    fy = oy - circle.cy
    c = fx * fx + fy * fy - circle.r ** 2
    if c < 0.0:
        return np.zeros(dirs.shape[0])
    b = dirs[:, 0] * fx + dirs[:, 1] * fy
    disc = b * b - c
    hit = disc >= 0.0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t1 = -b - sq
    t2 = -b + sq
    t = np.where(t1 >= 0.0, t1, np.where(t2 >= 0.0, t2, np.inf))
    return np.where(hit, t, np.inf)
