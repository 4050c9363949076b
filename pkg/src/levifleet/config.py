"""Run configuration: one JSON file with sections for every subsystem.

``default_config()`` describes the standard two-robot demo arena; a config
file may override any subset of sections.  All simulation entry points take
an :class:`AppConfig` so batch runs, the CLI, and the live service share
one source of defaults.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

from .coordination import ProtocolConfig
from .geometry import Point2D, Pose2D
from .messaging import FaultModel
from .nlparse import DEFAULT_MAX_ATTEMPTS, DEFAULT_TEMPERATURE_SCHEDULE, SpatialContext
from .robots import Arena, RobotLimits
from .session import SessionPhrases


@dataclass(frozen=True)
class AcousticsConfig:
    frequency: float = 40_000.0
    speed_of_sound: float = 343.0
    pitch: float = 0.010
    amplitude: float = 1.0


@dataclass(frozen=True)
class ParserSettings:
    temperature_schedule: tuple[float, ...] = DEFAULT_TEMPERATURE_SCHEDULE
    max_attempts: int = DEFAULT_MAX_ATTEMPTS
    backend: str = "reference"


@dataclass(frozen=True)
class Tolerances:
    pos_tol: float = 0.005
    ang_tol: float = 0.02
    sync_spacing_tol: float = 0.02
    formation_midpoint_tol: float = 0.005
    formation_heading_tol: float = 0.01


@dataclass(frozen=True)
class MotionSettings:
    dt: float = 0.05
    sync_speed: float = 0.08
    trap_offset: float = 0.2
    intent_interval: float = 0.1
    yield_radius_factor: float = 4.0  # times safety_radius
    mocap_sigma_pos: float = 0.001
    mocap_sigma_ang: float = 0.002


@dataclass
class AppConfig:
    roster: dict[str, Pose2D]
    arena: Arena
    faults: FaultModel = field(default_factory=FaultModel)
    parser: ParserSettings = field(default_factory=ParserSettings)
    acoustics: AcousticsConfig = field(default_factory=AcousticsConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    limits: RobotLimits = field(default_factory=RobotLimits)
    motion: MotionSettings = field(default_factory=MotionSettings)
    phrases: SessionPhrases = field(default_factory=SessionPhrases)
    user_pose: Pose2D = field(default_factory=lambda: Pose2D(0.5, 0.5, 0.0))
    global_timeout: float = 300.0

    def spatial_context(self) -> SpatialContext:
        return SpatialContext(
            named_locations=dict(self.arena.named_locations),
            user_pose=self.user_pose,
            robot_poses=dict(self.roster),
        )

    def fresh_arena(self) -> Arena:
        """Arena copy with object positions reset (runs mutate objects)."""
        return Arena(
            width=self.arena.width,
            height=self.arena.height,
            named_locations=dict(self.arena.named_locations),
            objects=dict(self.arena.objects),
            safety_radius=self.arena.safety_radius,
            pickup_radius=self.arena.pickup_radius,
        )


def default_arena() -> Arena:
    return Arena(
        width=4.0,
        height=4.0,
        named_locations={
            "dock": Point2D(3.2, 2.0),
            "storage": Point2D(0.8, 3.2),
            "bench": Point2D(2.0, 3.4),
            "charging_station": Point2D(3.4, 0.6),
            "center": Point2D(2.0, 2.0),
        },
        objects={
            "A": Point2D(1.2, 1.2),
            "B": Point2D(2.8, 1.2),
            "C": Point2D(2.0, 1.6),
        },
        safety_radius=0.15,
        pickup_radius=0.10,
    )


def default_config() -> AppConfig:
    return AppConfig(
        roster={
            "robot1": Pose2D(0.6, 0.6, 0.0),
            "robot2": Pose2D(3.4, 0.6, math.pi),
        },
        arena=default_arena(),
    )


def _pose_from(value) -> Pose2D:
    if isinstance(value, Mapping):
        return Pose2D(float(value["x"]), float(value["y"]), float(value.get("theta", 0.0)))
    x, y, *rest = value
    return Pose2D(float(x), float(y), float(rest[0]) if rest else 0.0)


def config_from_dict(doc: Mapping[str, Any]) -> AppConfig:
    cfg = default_config()
    if "roster" in doc:
        cfg.roster = {name: _pose_from(pose) for name, pose in doc["roster"].items()}
    if "arena" in doc:
        cfg.arena = Arena.from_dict(doc["arena"])
    if "faults" in doc:
        f = doc["faults"]
        cfg.faults = FaultModel(
            latency_base=float(f.get("latency_base", cfg.faults.latency_base)),
            latency_jitter=float(f.get("latency_jitter", cfg.faults.latency_jitter)),
            drop_prob=float(f.get("drop_prob", cfg.faults.drop_prob)),
            seed=int(f.get("seed", cfg.faults.seed)),
        )
    if "parser" in doc:
        p = doc["parser"]
        cfg.parser = ParserSettings(
            temperature_schedule=tuple(p.get("temperature_schedule", DEFAULT_TEMPERATURE_SCHEDULE)),
            max_attempts=int(p.get("max_attempts", DEFAULT_MAX_ATTEMPTS)),
            backend=str(p.get("backend", "reference")),
        )
    if "acoustics" in doc:
        a = doc["acoustics"]
        cfg.acoustics = AcousticsConfig(
            frequency=float(a.get("frequency", 40_000.0)),
            speed_of_sound=float(a.get("speed_of_sound", 343.0)),
            pitch=float(a.get("pitch", 0.010)),
            amplitude=float(a.get("amplitude", 1.0)),
        )
    if "tolerances" in doc:
        t = doc["tolerances"]
        base = Tolerances()
        cfg.tolerances = Tolerances(
            pos_tol=float(t.get("pos_tol", base.pos_tol)),
            ang_tol=float(t.get("ang_tol", base.ang_tol)),
            sync_spacing_tol=float(t.get("sync_spacing_tol", base.sync_spacing_tol)),
            formation_midpoint_tol=float(t.get("formation_midpoint_tol", base.formation_midpoint_tol)),
            formation_heading_tol=float(t.get("formation_heading_tol", base.formation_heading_tol)),
        )
    if "protocol" in doc:
        pr = doc["protocol"]
        base_pr = ProtocolConfig()
        cfg.protocol = ProtocolConfig(
            retransmit_limit=int(pr.get("retransmit_limit", base_pr.retransmit_limit)),
            retransmit_interval=float(pr.get("retransmit_interval", base_pr.retransmit_interval)),
            start_delay=float(pr.get("start_delay", base_pr.start_delay)),
            barrier_timeout=float(pr.get("barrier_timeout", base_pr.barrier_timeout)),
            timeout_base=float(pr.get("timeout_base", base_pr.timeout_base)),
            timeout_factor=float(pr.get("timeout_factor", base_pr.timeout_factor)),
        )
    if "phrases" in doc:
        ph = doc["phrases"]
        base_ph = SessionPhrases()
        cfg.phrases = SessionPhrases(
            wake=str(ph.get("wake", base_ph.wake)),
            deactivate=str(ph.get("deactivate", base_ph.deactivate)),
            exit=str(ph.get("exit", base_ph.exit)),
        )
    if "user_pose" in doc:
        cfg.user_pose = _pose_from(doc["user_pose"])
    if "global_timeout" in doc:
        cfg.global_timeout = float(doc["global_timeout"])
    return cfg


def load_config(path: str) -> AppConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))

