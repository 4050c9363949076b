"""Simulated differential-drive robots and their navigation primitives.

Each robot is a unicycle-model base carrying a phased-array module.  The
controllers here are pure per-tick step functions: the agent runtime feeds
them noisy mocap pose samples and applies the returned velocity commands
through :func:`step_dynamics`.  Nothing in this module touches the message
bus; protocol gating (handshakes, barriers) lives one layer up.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping

from .geometry import Point2D, Pose2D, normalize_angle
from .taskmodel import ActionType, Task


@dataclass
class RobotLimits:
    """Velocity caps and controller tolerances for a small differential-drive base."""

    v_max: float = 0.22
    omega_max: float = 2.84
    gain: float = 1.0
    v_fine: float = 0.05
    fine_threshold: float = 0.05
    pos_tol: float = 0.005
    ang_tol: float = 0.02
    heading_gain: float = 4.0
    # declare arrival below this fraction of pos_tol so that mocap noise on
    # the stop decision cannot push the true error past pos_tol
    stop_frac: float = 0.5


@dataclass
class Arena:
    width: float
    height: float
    named_locations: dict[str, Point2D] = field(default_factory=dict)
    objects: dict[str, Point2D] = field(default_factory=dict)
    safety_radius: float = 0.15
    pickup_radius: float = 0.10

    def contains(self, x: float, y: float, margin: float = 0.0) -> bool:
        return margin <= x <= self.width - margin and margin <= y <= self.height - margin

    def to_dict(self) -> dict[str, Any]:
        return {
            "width": self.width,
            "height": self.height,
            "named_locations": {k: [p.x, p.y] for k, p in sorted(self.named_locations.items())},
            "objects": {k: [p.x, p.y] for k, p in sorted(self.objects.items())},
            "safety_radius": self.safety_radius,
            "pickup_radius": self.pickup_radius,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "Arena":
        return cls(
            width=float(doc["width"]),
            height=float(doc["height"]),
            named_locations={k: Point2D(*v) for k, v in doc.get("named_locations", {}).items()},
            objects={k: Point2D(*v) for k, v in doc.get("objects", {}).items()},
            safety_radius=float(doc.get("safety_radius", 0.15)),
            pickup_radius=float(doc.get("pickup_radius", 0.10)),
        )

    @classmethod
    def from_file(cls, path: str) -> "Arena":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class RobotState:
    id: str
    pose: Pose2D
    linear_v: float = 0.0
    angular_v: float = 0.0
    carrying: str | None = None
    current_task: str | None = None


@dataclass(frozen=True)
class Cmd:
    v: float = 0.0
    w: float = 0.0

STOP = Cmd(0.0, 0.0)
STOPPED_EPS = 1e-9  # velocity magnitude below which a robot counts as still


def step_dynamics(state: RobotState, cmd: Cmd, dt: float, limits: RobotLimits | None = None) -> RobotState:
    """Unicycle update with velocity clamping; dt must be positive."""
    limits = limits or RobotLimits()
    v = max(-limits.v_max, min(limits.v_max, cmd.v))
    w = max(-limits.omega_max, min(limits.omega_max, cmd.w))
    pose = state.pose
    return replace(
        state,
        pose=Pose2D(
            pose.x + v * math.cos(pose.theta) * dt,
            pose.y + v * math.sin(pose.theta) * dt,
            normalize_angle(pose.theta + w * dt),
        ),
        linear_v=v,
        angular_v=w,
    )


def adaptive_velocity(distance_to_goal: float, limits: RobotLimits | None = None) -> float:
    """Speed command that slows near the goal; monotone in distance."""
    limits = limits or RobotLimits()
    v = min(limits.v_max, limits.gain * distance_to_goal)
    if distance_to_goal < limits.fine_threshold:
        v = min(v, limits.v_fine)
    return v


@dataclass
class MocapModel:
    """Gaussian pose-noise model replicating an external tracking system."""

    sigma_pos: float = 0.001
    sigma_ang: float = 0.002
    rng: random.Random = field(default_factory=lambda: random.Random(0))

    def sample(self, true_pose: Pose2D) -> Pose2D:
        if self.sigma_pos == 0.0 and self.sigma_ang == 0.0:
            return true_pose
        return Pose2D(
            true_pose.x + self.rng.gauss(0.0, self.sigma_pos),
            true_pose.y + self.rng.gauss(0.0, self.sigma_pos),
            true_pose.theta + self.rng.gauss(0.0, self.sigma_ang),
        )


def mocap_sample(true_pose: Pose2D, rng: random.Random,
                 sigma_pos: float = 0.001, sigma_ang: float = 0.002) -> Pose2D:
    return MocapModel(sigma_pos, sigma_ang, rng).sample(true_pose)


def allocate_safe_positions(
    target: Point2D,
    robot_ids,
    safety_radius: float,
    k_spread: float = 2.0,
    min_approach: float = 0.35,
) -> dict[str, Pose2D]:
    """Deterministic staging slots on a circle around a shared target.

    Robots sorted by id take equally spaced angular slots facing the target;
    the circle radius guarantees pairwise separation of at least twice the
    safety radius regardless of how many intent broadcasts arrived or in
    what order.
    """
    ids = sorted(robot_ids)
    k = len(ids)
    radius = max(safety_radius * k_spread, min_approach)
    if k >= 2:
        radius = max(radius, safety_radius / math.sin(math.pi / k))
    out: dict[str, Pose2D] = {}
    for i, rid in enumerate(ids):
        angle = 2.0 * math.pi * i / k
        x = target.x + radius * math.cos(angle)
        y = target.y + radius * math.sin(angle)
        out[rid] = Pose2D(x, y, normalize_angle(angle + math.pi))
    return out


def formation_back_to_back(
    leader_pose: Pose2D,
    follower_pose: Pose2D,
    object_loc: Point2D,
    spacing: float,
    axis: float,
) -> tuple[Pose2D, Pose2D]:
    """Formation goals for joint transport: arrays face each other across the object.

    The two goal poses sit ``spacing`` apart along ``axis`` with the object
    at their midpoint and headings differing by exactly pi.  Slot assignment
    minimizes combined travel; ties give the leader the negative-axis slot.
    """
    ux, uy = math.cos(axis), math.sin(axis)
    near = Pose2D(object_loc.x - 0.5 * spacing * ux, object_loc.y - 0.5 * spacing * uy, normalize_angle(axis))
    far = Pose2D(object_loc.x + 0.5 * spacing * ux, object_loc.y + 0.5 * spacing * uy, normalize_angle(axis + math.pi))
    straight = leader_pose.distance_to(near) + follower_pose.distance_to(far)
    swapped = leader_pose.distance_to(far) + follower_pose.distance_to(near)
    if swapped < straight:
        return far, near
    return near, far


def trap_point(pose: Pose2D, offset: float = 0.2) -> Point2D:
    """Where a levitated object rides relative to the carrying robot."""
    return Point2D(pose.x + offset * math.cos(pose.theta), pose.y + offset * math.sin(pose.theta))


def estimate_duration(task: Task, from_pose: Pose2D | None, arena: Arena,
                      limits: RobotLimits | None = None) -> float:
    """Nominal execution time used to derive dispatch timeouts.

    Conservative: unknown travel legs cost a full arena diagonal at cruise
    speed, and every navigation leg budgets alignment overhead.
    """
    limits = limits or RobotLimits()
    diagonal = math.hypot(arena.width, arena.height)
    align = 6.0
    cruise = 0.8 * limits.v_max

    def travel(dist: float) -> float:
        return dist / cruise + align

    action = task.action
    params = task.params
    if action is ActionType.MOVE:
        return abs(float(params["distance"])) / cruise + 2.0
    if action is ActionType.TURN:
        return abs(float(params["angle"])) / (0.5 * limits.omega_max) + 2.0
    if action is ActionType.SPEAK:
        return 1.0
    if action is ActionType.WAIT:
        return float(params["duration"]) + 1.0
    if action is ActionType.FOLLOW:
        return float(params.get("duration", 5.0)) + travel(diagonal)
    if action is ActionType.COLLECT:
        return align
    if action is ActionType.NAVIGATE or action is ActionType.DELIVER:
        target = params.get("target")
        if from_pose is not None and isinstance(target, Mapping):
            return travel(from_pose.distance_to(Point2D(target["x"], target["y"])))
        return travel(diagonal)
    if action is ActionType.TRANSPORT:
        return 2.0 * travel(diagonal) if from_pose is None else _transport_estimate(task, from_pose, arena, travel)
    if action is ActionType.CONTACTLESS_TRANSPORT:
        # approach + formation + barrier wait + synchronized leg
        return 2.0 * travel(diagonal) + 20.0
    return travel(diagonal)


def _transport_estimate(task: Task, from_pose: Pose2D, arena: Arena, travel) -> float:
    obj = arena.objects.get(task.params["object_id"])
    target = task.params.get("target")
    if obj is None or not isinstance(target, Mapping):
        return 2.0 * travel(math.hypot(arena.width, arena.height))
    leg1 = from_pose.distance_to(obj)
    leg2 = obj.distance_to(Point2D(target["x"], target["y"]))
    return travel(leg1) + travel(leg2)


# ---------------------------------------------------------------------------
# Per-tick controllers
# ---------------------------------------------------------------------------

class Status(Enum):
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


class GoToPose:
    """Rotate toward the goal, drive with adaptive velocity, fine-align.

    ``require_heading`` adds a final in-place rotation to the goal theta.
    All decisions use the supplied (noisy) mocap pose.
    """

    ALIGN, DRIVE, FINE, HEADING = range(4)

    def __init__(self, goal: Pose2D | Point2D, limits: RobotLimits,
                 require_heading: bool | None = None):
        self.goal = goal
        self.limits = limits
        if require_heading is None:
            require_heading = isinstance(goal, Pose2D)
        self.require_heading = require_heading and isinstance(goal, Pose2D)
        self.phase = self.ALIGN
        self.done = False

    def tick(self, mocap: Pose2D) -> Cmd:
        lim = self.limits
        dist = mocap.distance_to(self.goal)
        if self.phase == self.ALIGN:
            if dist <= lim.pos_tol * lim.stop_frac:
                self.phase = self.HEADING if self.require_heading else self.DRIVE
                if not self.require_heading:
                    self.done = True
                    return STOP
                return STOP
            bearing_err = normalize_angle(mocap.heading_to(self.goal) - mocap.theta)
            if abs(bearing_err) <= 0.05:
                self.phase = self.DRIVE
            else:
                return Cmd(0.0, _clamped(lim.heading_gain * bearing_err, lim.omega_max))
        if self.phase in (self.DRIVE, self.FINE):
            if dist <= lim.pos_tol * lim.stop_frac:
                if self.require_heading:
                    self.phase = self.HEADING
                else:
                    self.done = True
                    return STOP
            else:
                if dist < lim.fine_threshold:
                    self.phase = self.FINE
                bearing_err = normalize_angle(mocap.heading_to(self.goal) - mocap.theta)
                v = adaptive_velocity(dist, lim)
                if abs(bearing_err) > math.pi / 2:
                    # goal is behind: in fine mode back up instead of spinning
                    if self.phase == self.FINE:
                        v = -v
                        bearing_err = normalize_angle(bearing_err + math.pi)
                    else:
                        self.phase = self.ALIGN
                        return Cmd(0.0, _clamped(lim.heading_gain * bearing_err, lim.omega_max))
                if abs(bearing_err) > 0.6 and self.phase != self.FINE:
                    self.phase = self.ALIGN
                    return Cmd(0.0, _clamped(lim.heading_gain * bearing_err, lim.omega_max))
                return Cmd(v, _clamped(lim.heading_gain * bearing_err, lim.omega_max))
        if self.phase == self.HEADING:
            assert isinstance(self.goal, Pose2D)
            err = normalize_angle(self.goal.theta - mocap.theta)
            if abs(err) <= lim.ang_tol * lim.stop_frac:
                self.done = True
                return STOP
            return Cmd(0.0, _clamped(lim.heading_gain * err, lim.omega_max))
        return STOP


class RelativeMove:
    """Drive a signed distance along the current heading."""

    def __init__(self, mocap: Pose2D, distance: float, limits: RobotLimits):
        sign = 1.0 if distance >= 0 else -1.0
        goal = Point2D(
            mocap.x + distance * math.cos(mocap.theta),
            mocap.y + distance * math.sin(mocap.theta),
        )
        self.goal = goal
        self.sign = sign
        self.limits = limits
        self.done = False

    def tick(self, mocap: Pose2D) -> Cmd:
        lim = self.limits
        dist = mocap.distance_to(self.goal)
        if dist <= lim.pos_tol * lim.stop_frac:
            self.done = True
            return STOP
        v = self.sign * adaptive_velocity(dist, lim)
        bearing = normalize_angle(mocap.heading_to(self.goal) - mocap.theta)
        if self.sign < 0:
            bearing = normalize_angle(bearing + math.pi)
        if abs(bearing) > math.pi / 2:
            # overshot: creep back
            v = -v
        return Cmd(v, _clamped(lim.heading_gain * bearing * 0.2, lim.omega_max))


class RelativeTurn:
    """Rotate in place by a signed angle."""

    def __init__(self, mocap: Pose2D, angle: float, limits: RobotLimits):
        self.target = normalize_angle(mocap.theta + angle)
        self.limits = limits
        self.done = False

    def tick(self, mocap: Pose2D) -> Cmd:
        err = normalize_angle(self.target - mocap.theta)
        if abs(err) <= self.limits.ang_tol * self.limits.stop_frac:
            self.done = True
            return STOP
        return Cmd(0.0, _clamped(self.limits.heading_gain * err, self.limits.omega_max))


class SynchronizedTranslate:
    """Track a time-parameterized goal so two robots move as one rigid pair.

    Each partner tracks ``anchor(t) + offset`` where the anchor slides from
    the formation midpoint to the transport target at ``speed``.  Because
    both robots parameterize by the shared start timestamp, spacing is
    preserved to within tracking error.
    """

    def __init__(self, start_mid: Point2D, target: Point2D, offset: tuple[float, float],
                 start_time: float, speed: float, limits: RobotLimits, reversed_drive: bool):
        self.start_mid = start_mid
        self.target = target
        self.offset = offset
        self.start_time = start_time
        self.speed = speed
        self.limits = limits
        self.reversed = reversed_drive
        length = start_mid.distance_to(target)
        self.duration = length / speed if speed > 0 else 0.0
        self.done = False

    def anchor(self, t: float) -> Point2D:
        if self.duration <= 0:
            frac = 1.0
        else:
            frac = min(1.0, max(0.0, (t - self.start_time) / self.duration))
        return Point2D(
            self.start_mid.x + frac * (self.target.x - self.start_mid.x),
            self.start_mid.y + frac * (self.target.y - self.start_mid.y),
        )

    def tick(self, mocap: Pose2D, t: float) -> Cmd:
        lim = self.limits
        if t < self.start_time:
            return STOP
        anchor = self.anchor(t)
        goal = Point2D(anchor.x + self.offset[0], anchor.y + self.offset[1])
        err = mocap.distance_to(goal)
        at_end = (t - self.start_time) >= self.duration
        if at_end and err <= lim.pos_tol * lim.stop_frac:
            self.done = True
            return STOP
        # feedforward along the axis plus proportional correction
        ff = 0.0 if at_end else self.speed
        ex = goal.x - mocap.x
        ey = goal.y - mocap.y
        hx, hy = math.cos(mocap.theta), math.sin(mocap.theta)
        along = ex * hx + ey * hy
        lateral = -ex * hy + ey * hx
        direction = -1.0 if self.reversed else 1.0
        v = direction * ff + 3.0 * along
        w = _clamped(2.0 * lateral * direction, 0.5)
        return Cmd(_clamped(v, lim.v_max), w)


def _clamped(value: float, bound: float) -> float:
    return max(-bound, min(bound, value))
