"""Shared 2D pose/point primitives used by the parser, robots, and arena."""

from __future__ import annotations

import math
from dataclasses import dataclass


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class Point2D:
    x: float
    y: float

    def distance_to(self, other: "Point2D | Pose2D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def position(self) -> Point2D:
        return Point2D(self.x, self.y)

    def distance_to(self, other: "Point2D | Pose2D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def heading_to(self, other: "Point2D | Pose2D") -> float:
        return math.atan2(other.y - self.y, other.x - self.x)
