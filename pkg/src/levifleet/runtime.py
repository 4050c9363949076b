"""Agent runtime: scheduler and robot agents stepped on a simulated clock.

One :class:`Simulation` owns the world truth (arena, robot states, object
positions), the seeded message bus, the session machine, one scheduler
agent, and one agent per robot.  Agents interact only through bus messages;
the scheduler is co-located with the session FSM and is the single dispatch
origin per command, while every protocol state machine (handshake, barrier)
runs to the rules in :mod:`levifleet.coordination`.

Determinism: every random draw comes from a seeded generator (bus faults,
per-robot mocap noise), agents are stepped in sorted order, and time is an
integer tick count times dt, so one (config, script, seed) triple always
produces the identical trace.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Any

from .config import AppConfig
from .coordination import (
    ABORT,
    ACK,
    ASSIGN,
    DONE,
    FAIL,
    INTENT,
    PROGRESS,
    READY,
    START,
    Assignment,
    BarrierState,
    DispatchSchedule,
    HandshakeSession,
    HandshakeState,
    ProtocolMessage,
    Role,
    SendRequest,
    TimeoutTick,
    barrier_step,
    degrade,
    handshake_step,
    schedule,
)
from .geometry import Point2D, Pose2D, normalize_angle
from .messaging import Delivery, SimBus
from .nlparse import (
    CompletionBackend,
    ParseConfig,
    ParseFailure,
    ReferenceBackend,
    parse_command,
)
from .robots import (
    Cmd,
    GoToPose,
    MocapModel,
    RelativeMove,
    RelativeTurn,
    RobotState,
    STOPPED_EPS,
    SynchronizedTranslate,
    allocate_safe_positions,
    estimate_duration,
    formation_back_to_back,
    step_dynamics,
    trap_point,
)
from .session import (
    EffectKind,
    EventKind,
    SessionEvent,
    SessionMachine,
    SessionState,
)
from .taskmodel import Task, TaskPlan, task_to_dict

SCHEDULER_ID = "scheduler"


@dataclass
class TraceLog:
    """Append-only record of everything a run did, exported as JSONL."""

    entries: list[dict[str, Any]] = field(default_factory=list)

    def pose(self, t: float, robot: str, pose: Pose2D, v: float, w: float) -> None:
        self.entries.append(
            {
                "t": round(t, 6),
                "kind": "pose",
                "robot": robot,
                "x": pose.x,
                "y": pose.y,
                "theta": pose.theta,
                "v": v,
                "w": w,
            }
        )

    def event(self, t: float, kind: str, **fields: Any) -> None:
        entry = {"t": round(t, 6), "kind": kind}
        entry.update(fields)
        self.entries.append(entry)


class World:
    """Physical ground truth shared by all agents via the mocap system."""

    def __init__(self, cfg: AppConfig, seed: int):
        self.arena = cfg.fresh_arena()
        self.robots: dict[str, RobotState] = {
            rid: RobotState(id=rid, pose=pose) for rid, pose in sorted(cfg.roster.items())
        }
        self.mocap: dict[str, MocapModel] = {
            rid: MocapModel(
                cfg.motion.mocap_sigma_pos,
                cfg.motion.mocap_sigma_ang,
                random.Random(f"{seed}:{rid}"),
            )
            for rid in sorted(cfg.roster)
        }
        self.clock_offsets: dict[str, float] = {rid: 0.0 for rid in cfg.roster}
        # (group, members) -> object riding at the pair midpoint
        self.sync_carries: dict[str, tuple[str, tuple[str, str]]] = {}

    def sample(self, robot_id: str) -> Pose2D:
        return self.mocap[robot_id].sample(self.robots[robot_id].pose)

    def settle_objects(self) -> None:
        for group, (object_id, members) in self.sync_carries.items():
            a = self.robots[members[0]].pose
            b = self.robots[members[1]].pose
            self.arena.objects[object_id] = Point2D((a.x + b.x) / 2, (a.y + b.y) / 2)
        for state in self.robots.values():
            if state.carrying is not None:
                self.arena.objects[state.carrying] = trap_point(state.pose)


# ---------------------------------------------------------------------------
# Robot agent
# ---------------------------------------------------------------------------

# Contactless transport phases
STAGE, FORM, VALIDATE, WAIT_START, TRANSLATE = range(5)


@dataclass
class PendingReport:
    message: ProtocolMessage
    next_send: float
    sends: int = 0


@dataclass
class TaskExec:
    task: Task
    session_id: str
    timeout: float
    plan_id: str
    sync: dict[str, Any] | None
    started: bool = False
    start_at: float | None = None
    controller: Any = None
    phase: int = 0
    queue: list[Any] = field(default_factory=list)
    sync_phase: int = STAGE
    barrier_start: float | None = None
    translate: SynchronizedTranslate | None = None
    next_ready: float = 0.0
    ready_deadline: float | None = None
    formation_goal: Pose2D | None = None
    staging_slots: dict[str, Pose2D] | None = None


class RobotAgent:
    def __init__(self, robot_id: str, sim: "Simulation"):
        self.id = robot_id
        self.sim = sim
        self.cfg = sim.cfg
        self.sessions: dict[str, HandshakeSession] = {}
        self.queue: list[TaskExec] = []
        self.active: TaskExec | None = None
        self.reports: dict[str, PendingReport] = {}
        self.peer_intents: dict[str, tuple[float, Pose2D, Point2D | None]] = {}
        self._avoid_side: dict[str, float] = {}
        self.next_intent = 0.0
        self.moved_once: set[str] = set()

    # -- messaging ---------------------------------------------------------

    def send(self, message: ProtocolMessage, recipient: str) -> None:
        self.sim.bus.send(message.to_payload(), self.id, recipient)

    def on_delivery(self, delivery: Delivery, now: float) -> None:
        msg = ProtocolMessage.from_payload(delivery.payload)
        if msg.type == INTENT:
            body = msg.body
            pose = Pose2D(*body["pose"])
            goal = Point2D(*body["goal"]) if body.get("goal") else None
            self.peer_intents[msg.sender] = (now, pose, goal)
            return
        if msg.type == ASSIGN:
            self._on_assign(msg, now)
            return
        if msg.type == ACK:
            self.reports.pop(msg.session_id, None)
            return
        if msg.type == START and msg.body.get("barrier"):
            self._on_barrier_start(msg, now)
            return
        if msg.type in (START, ABORT) and msg.session_id in self.sessions:
            session = self.sessions[msg.session_id]
            session, out = self._hs(session, msg, now)
            if msg.type == START and session.state is HandshakeState.ESTABLISHED:
                self._mark_started(msg.session_id, now)
            if msg.type == ABORT:
                self._cancel(msg.session_id, now, reason=msg.body.get("reason", "abort"))
            return
        if msg.type == ABORT:
            self._cancel(msg.session_id, now, reason=msg.body.get("reason", "abort"))

    def _hs(self, session: HandshakeSession, inp, now: float):
        session, out = handshake_step(session, inp, now, self.cfg.protocol)
        self.sessions[session.session_id] = session
        for message in out:
            self.send(message, session.peer)
        return session, out

    def _on_assign(self, msg: ProtocolMessage, now: float) -> None:
        session = self.sessions.get(msg.session_id)
        if session is None:
            session = HandshakeSession(
                session_id=msg.session_id,
                initiator=msg.sender,
                responder=self.id,
                role=Role.RESPONDER,
                task_id=msg.task_id or "",
            )
            self.sessions[msg.session_id] = session
        fresh = session.state is HandshakeState.INIT
        session, _ = self._hs(session, msg, now)
        if fresh and session.state is HandshakeState.ACK_RECEIVED:
            body = msg.body
            task_doc = dict(body["task"])
            task = Task(
                id=task_doc["id"],
                robot=task_doc["robot"],
                action=_action_of(task_doc["action"]),
                params=dict(task_doc["params"]),
                sequence=task_doc.get("sequence"),
                sync_group=task_doc.get("sync_group"),
            )
            self.queue.append(
                TaskExec(
                    task=task,
                    session_id=msg.session_id,
                    timeout=float(body.get("timeout", 60.0)),
                    plan_id=str(body.get("plan_id", "")),
                    sync=body.get("sync"),
                )
            )

    def _mark_started(self, session_id: str, now: float) -> None:
        for exec_ in self.queue:
            if exec_.session_id == session_id and not exec_.started:
                exec_.started = True
                exec_.start_at = now

    def _on_barrier_start(self, msg: ProtocolMessage, now: float) -> None:
        exec_ = self.active
        if exec_ is None or exec_.sync is None:
            return
        if msg.session_id != f"{exec_.plan_id}/sync/{exec_.task.sync_group}":
            return
        start_time = float(msg.body["start_time"])
        self.sim.trace.event(
            now, "barrier_start_received", robot=self.id,
            task=exec_.task.id, start_time=start_time,
        )
        if exec_.sync_phase == WAIT_START and exec_.barrier_start is None:
            exec_.barrier_start = start_time
            if self._local_time(now) > start_time:
                # the shared moment has already passed: abort-on-uncertainty
                self._fail(exec_, now, "start signal arrived late")

    def _cancel(self, session_id: str, now: float, reason: str) -> None:
        if self.active is not None and self.active.session_id == session_id:
            self._finish_active(now)
            self.sim.trace.event(now, "task_cancelled", robot=self.id, reason=reason)
            return
        self.queue = [e for e in self.queue if e.session_id != session_id]

    def cancel_all(self, now: float) -> None:
        self.queue.clear()
        if self.active is not None:
            self._finish_active(now)
            self.sim.trace.event(now, "task_cancelled", robot=self.id, reason="deactivated")

    # -- stepping ------------------------------------------------------------

    def _local_time(self, now: float) -> float:
        return now + self.sim.world.clock_offsets.get(self.id, 0.0)

    def step(self, now: float, dt: float) -> None:
        self._handshake_timers(now)
        self._flush_reports(now)

        if self.active is None and self.queue:
            nxt = self.queue[0]
            if nxt.started:
                self.queue.pop(0)
                self.active = nxt
                self._begin(nxt, now)

        state = self.sim.world.robots[self.id]
        cmd = Cmd(0.0, 0.0)
        if self.active is not None:
            detour = self._conflict_cmd(now)
            if detour is not None:
                cmd = detour
            else:
                cmd = self._tick_active(self.active, now, dt)
        new_state = step_dynamics(state, cmd, dt, self.cfg.limits)
        if not self.sim.world.arena.contains(new_state.pose.x, new_state.pose.y):
            if self.active is not None:
                self._fail(self.active, now, "left arena bounds")
            new_state = state
        self.sim.world.robots[self.id] = new_state

        if self.active is not None and now >= self.next_intent:
            self._broadcast_intent(now)

    def _handshake_timers(self, now: float) -> None:
        for sid in sorted(self.sessions):
            session = self.sessions[sid]
            if session.deadline is not None and now >= session.deadline:
                session, _ = self._hs(session, TimeoutTick(), now)
                if session.state is HandshakeState.ABORTED:
                    self._cancel(sid, now, reason="handshake abort")

    def _flush_reports(self, now: float) -> None:
        for sid in sorted(self.reports):
            report = self.reports[sid]
            if now >= report.next_send:
                if report.sends >= 10:
                    del self.reports[sid]
                    continue
                self.send(report.message, SCHEDULER_ID)
                report.sends += 1
                report.next_send = now + self.cfg.protocol.retransmit_interval

    def _broadcast_intent(self, now: float) -> None:
        self.next_intent = now + self.cfg.motion.intent_interval
        pose = self.sim.world.robots[self.id].pose
        goal = self._current_goal()
        message = ProtocolMessage(
            type=INTENT,
            session_id="intent",
            task_id=self.active.task.id if self.active else None,
            sender=self.id,
            timestamp=now,
            body={
                "pose": [pose.x, pose.y, pose.theta],
                "goal": [goal.x, goal.y] if goal else None,
            },
        )
        for rid in sorted(self.sim.world.robots):
            if rid != self.id:
                self.send(message, rid)

    def _current_goal(self) -> Point2D | None:
        exec_ = self.active
        if exec_ is None:
            return None
        controller = exec_.controller
        goal = getattr(controller, "goal", None)
        if isinstance(goal, Pose2D):
            return Point2D(goal.x, goal.y)
        return goal

    def _conflict_cmd(self, now: float) -> Cmd | None:
        """Intent-based collision avoidance between non-cooperating robots.

        Within the conflict radius the robot with the larger id stops and
        waits (deterministic priority); the privileged robot detours along
        a tangent around the peer, holding one detour side per episode so
        goal steering cannot fight the avoidance.  Sync partners are exempt
        once the formation phase begins, where sub-radius proximity is the
        point.  Returns None when no conflict governs this tick.
        """
        exec_ = self.active
        partner = None
        if exec_ is not None and exec_.sync is not None and exec_.sync_phase >= FORM:
            partner = exec_.sync["partner"]
        me = self.sim.world.robots[self.id].pose
        radius = self.cfg.motion.yield_radius_factor * self.sim.world.arena.safety_radius
        for rid in sorted(self.sim.world.robots):
            if rid == self.id or rid == partner:
                continue
            last = self.peer_intents.get(rid)
            peer_pose = last[1] if last else self.sim.start_poses[rid]
            dist = me.distance_to(peer_pose)
            if dist >= radius + 0.05:
                self._avoid_side.pop(rid, None)
            if dist >= radius:
                continue
            bearing = normalize_angle(me.heading_to(peer_pose) - me.theta)
            behind = abs(bearing) > 0.6 * math.pi
            if behind and rid not in self._avoid_side:
                continue  # receding peer, no conflict
            peer_active = last is not None and now - last[0] < 0.5
            if peer_active and rid < self.id:
                return Cmd(0.0, 0.0)
            return self._detour_cmd(rid, me, peer_pose, dist)
        return None

    def _detour_cmd(self, rid: str, me: Pose2D, peer: Pose2D, dist: float) -> Cmd:
        ux = (peer.x - me.x) / max(dist, 1e-9)
        uy = (peer.y - me.y) / max(dist, 1e-9)
        side = self._avoid_side.get(rid)
        if side is None:
            goal = self._current_goal()
            if goal is not None:
                cross = ux * (goal.y - me.y) - uy * (goal.x - me.x)
                side = 1.0 if cross >= 0 else -1.0
            else:
                side = 1.0
            self._avoid_side[rid] = side
        # tangential direction plus an outward push when closing on the floor
        tx, ty = -uy * side, ux * side
        floor = 2.2 * self.sim.world.arena.safety_radius
        push = max(0.0, (floor + 0.08 - dist) / 0.08)
        dx, dy = tx - ux * push, ty - uy * push
        desired = math.atan2(dy, dx)
        err = normalize_angle(desired - me.theta)
        v = 0.6 * self.cfg.limits.v_max * max(0.0, math.cos(err))
        w = max(-self.cfg.limits.omega_max, min(self.cfg.limits.omega_max, 3.0 * err))
        return Cmd(v, w)

    # -- execution ----------------------------------------------------------

    def _begin(self, exec_: TaskExec, now: float) -> None:
        task = exec_.task
        self.sim.world.robots[self.id].current_task = task.id
        self.sim.trace.event(now, "task_started", robot=self.id, task=task.id,
                             action=task.action.value)
        self.sim.note_first_motion_candidate(self.id, task.id)
        limits = self.cfg.limits
        mocap = self.sim.world.sample(self.id)
        params = task.params
        action = task.action.value

        if action == "move":
            exec_.controller = RelativeMove(mocap, float(params["distance"]), limits)
        elif action == "turn":
            exec_.controller = RelativeTurn(mocap, float(params["angle"]), limits)
        elif action == "navigate":
            exec_.controller = GoToPose(_point_of(params["target"]), limits)
        elif action == "follow":
            exec_.controller = None  # handled per tick
        elif action == "collect":
            exec_.controller = None
        elif action == "deliver":
            if self.sim.world.robots[self.id].carrying != params["object_id"]:
                self._fail(exec_, now, "not carrying requested object")
                return
            goal = _carry_goal(Point2D(mocap.x, mocap.y), _point_of(params["target"]),
                               self.cfg.motion.trap_offset)
            exec_.controller = GoToPose(goal, limits)
        elif action == "transport":
            obj = self.sim.world.arena.objects.get(params["object_id"])
            if obj is None:
                self._fail(exec_, now, "unknown object")
                return
            exec_.controller = GoToPose(obj, limits)
            exec_.phase = 0
        elif action == "speak":
            pass
        elif action == "wait":
            pass
        elif action == "contactless_transport":
            self._begin_contactless(exec_, now)
        else:  # pragma: no cover - validation forbids
            self._fail(exec_, now, f"unsupported action {action}")

    def _begin_contactless(self, exec_: TaskExec, now: float) -> None:
        params = exec_.task.params
        obj = self.sim.world.arena.objects.get(params["object_id"])
        if obj is None or exec_.sync is None:
            self._fail(exec_, now, "joint transport misconfigured")
            return
        partner = exec_.sync["partner"]
        members = sorted([self.id, partner])
        slots = allocate_safe_positions(obj, members, self.sim.world.arena.safety_radius)
        # pair robots to slots by total travel so approach paths never cross;
        # both partners compute this from mocap estimates with a margin far
        # beyond the noise floor, so they agree
        mine = self.sim.world.sample(self.id)
        theirs = self.sim.world.sample(partner)
        poses = {self.id: mine, partner: theirs}
        a, b = members
        straight = poses[a].distance_to(slots[a]) + poses[b].distance_to(slots[b])
        swapped = poses[a].distance_to(slots[b]) + poses[b].distance_to(slots[a])
        if swapped < straight:
            slots = {a: slots[b], b: slots[a]}
        exec_.staging_slots = slots
        exec_.sync_phase = STAGE
        exec_.controller = GoToPose(slots[self.id], self.cfg.limits, require_heading=False)

    def _formation_goal(self, exec_: TaskExec) -> Pose2D:
        """Both partners derive identical goals from shared deterministic
        inputs: staging slots, object position, and the transport axis."""
        params = exec_.task.params
        obj = self.sim.world.arena.objects[params["object_id"]]
        target = _point_of(params["target"])
        axis = math.atan2(target.y - obj.y, target.x - obj.x)
        spacing = float(params["spacing"])
        partner = exec_.sync["partner"]
        members = sorted([self.id, partner])
        slots = exec_.staging_slots or allocate_safe_positions(
            obj, members, self.sim.world.arena.safety_radius
        )
        near, far = formation_back_to_back(slots[members[0]], slots[members[1]], obj, spacing, axis)
        goals = {members[0]: near, members[1]: far}
        return goals[self.id]

    def _tick_active(self, exec_: TaskExec, now: float, dt: float) -> Cmd:
        task = exec_.task
        if exec_.start_at is not None and now - exec_.start_at > exec_.timeout:
            self._fail(exec_, now, "timeout")
            return Cmd(0.0, 0.0)

        action = task.action.value
        if action == "speak":
            self.sim.feedback(now, self.id, str(task.params["text"]))
            self._done(exec_, now)
            return Cmd(0.0, 0.0)
        if action == "wait":
            if now - (exec_.start_at or now) >= float(task.params["duration"]):
                self._done(exec_, now)
            return Cmd(0.0, 0.0)
        if action == "collect":
            return self._tick_collect(exec_, now)
        if action == "follow":
            return self._tick_follow(exec_, now)
        if action == "transport":
            return self._tick_transport(exec_, now)
        if action == "contactless_transport":
            return self._tick_contactless(exec_, now)

        # single-controller actions: move, turn, navigate, deliver
        mocap = self.sim.world.sample(self.id)
        cmd = exec_.controller.tick(mocap)
        if exec_.controller.done:
            if action == "deliver":
                self._release_object(task.params["object_id"], now)
            self._done(exec_, now)
            return Cmd(0.0, 0.0)
        return cmd

    def _tick_collect(self, exec_: TaskExec, now: float) -> Cmd:
        params = exec_.task.params
        obj = self.sim.world.arena.objects.get(params["object_id"])
        state = self.sim.world.robots[self.id]
        if obj is None or state.pose.distance_to(obj) > self.sim.world.arena.pickup_radius:
            self._fail(exec_, now, "no object within pickup radius")
            return Cmd(0.0, 0.0)
        state.carrying = params["object_id"]
        self._done(exec_, now)
        return Cmd(0.0, 0.0)

    def _tick_follow(self, exec_: TaskExec, now: float) -> Cmd:
        params = exec_.task.params
        duration = float(params.get("duration", 5.0))
        if now - (exec_.start_at or now) >= duration:
            self._done(exec_, now)
            return Cmd(0.0, 0.0)
        partner = params["partner"]
        if partner not in self.sim.world.robots:
            self._fail(exec_, now, "unknown partner")
            return Cmd(0.0, 0.0)
        target_pose = self.sim.world.sample(partner)
        mocap = self.sim.world.sample(self.id)
        standoff = 0.4
        gap = mocap.distance_to(target_pose)
        bearing = normalize_angle(mocap.heading_to(target_pose) - mocap.theta)
        v = min(self.cfg.limits.v_max, max(0.0, self.cfg.limits.gain * (gap - standoff)))
        return Cmd(v, max(-1.5, min(1.5, 2.0 * bearing)))

    def _tick_transport(self, exec_: TaskExec, now: float) -> Cmd:
        params = exec_.task.params
        mocap = self.sim.world.sample(self.id)
        cmd = exec_.controller.tick(mocap)
        if not exec_.controller.done:
            return cmd
        state = self.sim.world.robots[self.id]
        if exec_.phase == 0:
            obj = self.sim.world.arena.objects.get(params["object_id"])
            if obj is None or state.pose.distance_to(obj) > self.sim.world.arena.pickup_radius:
                self._fail(exec_, now, "no object within pickup radius")
                return Cmd(0.0, 0.0)
            state.carrying = params["object_id"]
            self.sim.trace.event(now, "object_collected", robot=self.id,
                                 object=params["object_id"], task=exec_.task.id)
            exec_.phase = 1
            goal = _carry_goal(Point2D(state.pose.x, state.pose.y),
                               _point_of(params["target"]), self.cfg.motion.trap_offset)
            exec_.controller = GoToPose(goal, self.cfg.limits)
            self._progress(exec_, now, "carrying")
            return Cmd(0.0, 0.0)
        self._release_object(params["object_id"], now)
        self._done(exec_, now)
        return Cmd(0.0, 0.0)

    def _tick_contactless(self, exec_: TaskExec, now: float) -> Cmd:
        mocap = self.sim.world.sample(self.id)
        tol = self.cfg.tolerances

        if exec_.sync_phase == STAGE:
            cmd = exec_.controller.tick(mocap)
            if exec_.controller.done:
                exec_.sync_phase = FORM
                exec_.formation_goal = self._formation_goal(exec_)
                exec_.controller = GoToPose(exec_.formation_goal, self.cfg.limits)
                self._progress(exec_, now, "forming")
                return Cmd(0.0, 0.0)
            return cmd

        if exec_.sync_phase == FORM:
            cmd = exec_.controller.tick(mocap)
            if exec_.controller.done:
                exec_.sync_phase = VALIDATE
                return Cmd(0.0, 0.0)
            return cmd

        if exec_.sync_phase == VALIDATE:
            params = exec_.task.params
            partner = exec_.sync["partner"]
            partner_pose = self.sim.world.sample(partner)
            obj = self.sim.world.arena.objects[params["object_id"]]
            mid_err = math.hypot(
                (mocap.x + partner_pose.x) / 2 - obj.x,
                (mocap.y + partner_pose.y) / 2 - obj.y,
            )
            anti = abs(abs(normalize_angle(mocap.theta - partner_pose.theta)) - math.pi)
            if mid_err <= tol.formation_midpoint_tol and anti <= tol.formation_heading_tol:
                exec_.sync_phase = WAIT_START
                exec_.next_ready = now
                exec_.ready_deadline = now + self.cfg.protocol.barrier_timeout
                self.sim.trace.event(now, "formation_validated", robot=self.id,
                                     task=exec_.task.id, midpoint_error=mid_err,
                                     heading_error=anti)
            else:
                # re-align on the formation goal before signalling readiness
                exec_.sync_phase = FORM
                exec_.controller = GoToPose(exec_.formation_goal, self.cfg.limits)
            return Cmd(0.0, 0.0)

        if exec_.sync_phase == WAIT_START:
            if exec_.barrier_start is None:
                if exec_.ready_deadline is not None and now >= exec_.ready_deadline:
                    self._fail(exec_, now, "barrier wait timeout")
                    return Cmd(0.0, 0.0)
                if now >= exec_.next_ready:
                    exec_.next_ready = now + self.cfg.protocol.retransmit_interval
                    self.send(
                        ProtocolMessage(
                            type=READY,
                            session_id=f"{exec_.plan_id}/sync/{exec_.task.sync_group}",
                            task_id=exec_.task.id,
                            sender=self.id,
                            timestamp=now,
                            body={"group": exec_.task.sync_group},
                        ),
                        SCHEDULER_ID,
                    )
                return Cmd(0.0, 0.0)
            if self._local_time(now) >= exec_.barrier_start:
                self._enter_translate(exec_, now)
            return Cmd(0.0, 0.0)

        if exec_.sync_phase == TRANSLATE:
            assert exec_.translate is not None
            cmd = exec_.translate.tick(mocap, self._local_time(now))
            if exec_.translate.done:
                obj = self.sim.world.arena.objects[exec_.task.params["object_id"]]
                self.sim.trace.event(now, "object_released", robot=self.id,
                                     object=exec_.task.params["object_id"],
                                     x=obj.x, y=obj.y)
                self._done(exec_, now)
                return Cmd(0.0, 0.0)
            return cmd

        return Cmd(0.0, 0.0)

    def _enter_translate(self, exec_: TaskExec, now: float) -> None:
        params = exec_.task.params
        obj = self.sim.world.arena.objects[params["object_id"]]
        target = _point_of(params["target"])
        goal = exec_.formation_goal
        offset = (goal.x - obj.x, goal.y - obj.y)
        axis = math.atan2(target.y - obj.y, target.x - obj.x)
        # the far-slot robot faces against the transport axis and reverses
        reversed_drive = abs(normalize_angle(goal.theta - axis)) > math.pi / 2
        exec_.translate = SynchronizedTranslate(
            start_mid=obj,
            target=target,
            offset=offset,
            start_time=exec_.barrier_start or now,
            speed=self.cfg.motion.sync_speed,
            limits=self.cfg.limits,
            reversed_drive=reversed_drive,
        )
        group = f"{exec_.plan_id}/sync/{exec_.task.sync_group}"
        members = tuple(sorted([self.id, exec_.sync["partner"]]))
        self.sim.world.sync_carries[group] = (params["object_id"], members)
        exec_.sync_phase = TRANSLATE
        self.sim.trace.event(now, "sync_translate_started", robot=self.id,
                             task=exec_.task.id, start_time=exec_.barrier_start)

    # -- reporting ------------------------------------------------------------

    def _progress(self, exec_: TaskExec, now: float, phase: str) -> None:
        pose = self.sim.world.robots[self.id].pose
        self.send(
            ProtocolMessage(
                type=PROGRESS,
                session_id=exec_.session_id,
                task_id=exec_.task.id,
                sender=self.id,
                timestamp=now,
                body={"phase": phase, "pose": [pose.x, pose.y, pose.theta]},
            ),
            SCHEDULER_ID,
        )

    def _release_object(self, object_id: str, now: float) -> None:
        state = self.sim.world.robots[self.id]
        if state.carrying == object_id:
            resting = trap_point(state.pose)
            self.sim.world.arena.objects[object_id] = resting
            state.carrying = None
            self.sim.trace.event(now, "object_released", robot=self.id,
                                 object=object_id, x=resting.x, y=resting.y)

    def _report(self, exec_: TaskExec, mtype: str, body: dict[str, Any], now: float) -> None:
        message = ProtocolMessage(
            type=mtype,
            session_id=exec_.session_id,
            task_id=exec_.task.id,
            sender=self.id,
            timestamp=now,
            body=body,
        )
        self.send(message, SCHEDULER_ID)
        self.reports[exec_.session_id] = PendingReport(
            message=message, next_send=now + self.cfg.protocol.retransmit_interval, sends=1
        )

    def _done(self, exec_: TaskExec, now: float) -> None:
        mocap = self.sim.world.sample(self.id)
        self._report(exec_, DONE, {"pose": [mocap.x, mocap.y, mocap.theta]}, now)
        self.sim.trace.event(now, "task_done", robot=self.id, task=exec_.task.id)
        self._finish_active(now)

    def _fail(self, exec_: TaskExec, now: float, reason: str) -> None:
        self._report(exec_, FAIL, {"reason": reason}, now)
        self.sim.trace.event(now, "task_failed", robot=self.id, task=exec_.task.id,
                             reason=reason)
        self._finish_active(now)

    def _finish_active(self, now: float) -> None:
        exec_ = self.active
        if exec_ is not None and exec_.task.sync_group is not None:
            group = f"{exec_.plan_id}/sync/{exec_.task.sync_group}"
            self.sim.world.sync_carries.pop(group, None)
        self.active = None
        self.sim.world.robots[self.id].current_task = None


def _action_of(value: str):
    from .taskmodel import ActionType

    return ActionType(value)




def _carry_goal(from_point: Point2D, target: Point2D, trap_offset: float) -> Pose2D:
    """Pose whose trap point (trap_offset ahead) coincides with the target."""
    dx, dy = target.x - from_point.x, target.y - from_point.y
    dist = math.hypot(dx, dy)
    if dist < 1e-9:
        return Pose2D(target.x - trap_offset, target.y, 0.0)
    ux, uy = dx / dist, dy / dist
    return Pose2D(target.x - trap_offset * ux, target.y - trap_offset * uy,
                  math.atan2(uy, ux))


def _point_of(target: Any) -> Point2D:
    if isinstance(target, Point2D):
        return target
    return Point2D(float(target["x"]), float(target["y"]))


# ---------------------------------------------------------------------------
# Scheduler agent
# ---------------------------------------------------------------------------

TERMINAL = ("done", "failed", "cancelled")


@dataclass
class TaskRun:
    task: Task
    assignment: Assignment
    session: HandshakeSession | None = None
    state: str = "pending"  # pending|announced|running|done|failed|cancelled
    deadline: float | None = None
    reason: str | None = None
    final_pose: list[float] | None = None


@dataclass
class PlanRun:
    plan_id: str
    plan: TaskPlan
    sched: DispatchSchedule
    command_time: float
    tasks: dict[str, TaskRun]
    stage_idx: int = 0
    barriers: dict[str, BarrierState] = field(default_factory=dict)
    barrier_fired: set[str] = field(default_factory=set)
    finished: bool = False

    def outcomes(self) -> tuple[tuple[str, str], ...]:
        return tuple((tid, self.tasks[tid].state) for tid in sorted(self.tasks))

    @property
    def succeeded(self) -> bool:
        return all(run.state == "done" for run in self.tasks.values())


class SchedulerAgent:
    def __init__(self, sim: "Simulation"):
        self.id = SCHEDULER_ID
        self.sim = sim
        self.cfg = sim.cfg
        self.plans: dict[str, PlanRun] = {}
        self._counter = 0

    # -- dispatch -------------------------------------------------------------

    def dispatch(self, plan: TaskPlan, now: float, command_time: float) -> str:
        self._counter += 1
        plan_id = f"p{self._counter}"
        world = self.sim.world

        def estimator(task: Task) -> float:
            pose = world.robots.get(task.robot)
            return estimate_duration(task, pose.pose if pose else None, world.arena,
                                     self.cfg.limits)

        sched = schedule(plan, estimator=estimator, config=self.cfg.protocol)
        run = PlanRun(
            plan_id=plan_id,
            plan=plan,
            sched=sched,
            command_time=command_time,
            tasks={
                t.id: TaskRun(task=t, assignment=sched.assignments[t.id])
                for t in plan.tasks
            },
        )
        self.plans[plan_id] = run
        self.sim.trace.event(now, "plan_dispatched", plan=plan_id,
                             mode=sched.mode.value, tasks=sorted(run.tasks))
        self._start_stage(run, now)
        return plan_id

    def _start_stage(self, run: PlanRun, now: float) -> None:
        while run.stage_idx < len(run.sched.stages):
            stage = run.sched.stages[run.stage_idx]
            pending = [tid for tid in stage if run.tasks[tid].state == "pending"]
            if pending:
                for tid in sorted(pending):
                    self._announce(run, tid, now)
                return
            if all(run.tasks[tid].state in TERMINAL for tid in stage):
                run.stage_idx += 1
                continue
            return

    def _announce(self, run: PlanRun, tid: str, now: float) -> None:
        task_run = run.tasks[tid]
        task = task_run.task
        session_id = f"{run.plan_id}/{tid}"
        body: dict[str, Any] = {
            "task": task_to_dict(task),
            "timeout": task_run.assignment.timeout,
            "mode": run.sched.mode.value,
            "plan_id": run.plan_id,
        }
        if task.sync_group is not None:
            members = sorted(
                t.robot for t in run.plan.tasks if t.sync_group == task.sync_group
            )
            partner = next(m for m in members if m != task.robot) if len(members) == 2 else None
            body["sync"] = {
                "group": task.sync_group,
                "members": members,
                "leader": run.sched.group_leaders.get(task.sync_group),
                "partner": partner,
            }
            barrier_id = f"{run.plan_id}/sync/{task.sync_group}"
            if barrier_id not in run.barriers:
                run.barriers[barrier_id] = BarrierState(
                    group=barrier_id, members=frozenset(members)
                )
        session = HandshakeSession(
            session_id=session_id,
            initiator=self.id,
            responder=task.robot,
            role=Role.INITIATOR,
            task_id=tid,
        )
        session, out = handshake_step(session, SendRequest(body), now,
                                               self.cfg.protocol)
        task_run.session = session
        task_run.state = "announced"
        task_run.deadline = now + task_run.assignment.timeout
        for message in out:
            self.send(message, task.robot)

    def send(self, message: ProtocolMessage, recipient: str) -> None:
        self.sim.bus.send(message.to_payload(), self.id, recipient)

    # -- message handling -------------------------------------------------------

    def on_delivery(self, delivery: Delivery, now: float) -> None:
        msg = ProtocolMessage.from_payload(delivery.payload)
        if msg.type == READY:
            self._on_ready(msg, now)
            return
        run, task_run = self._locate(msg.session_id)
        if run is None or task_run is None:
            return
        if msg.type == ACK and task_run.session is not None:
            session, out = handshake_step(task_run.session, msg, now,
                                                   self.cfg.protocol)
            task_run.session = session
            for message in out:
                self.send(message, task_run.task.robot)
            if session.state is HandshakeState.ESTABLISHED and task_run.state == "announced":
                task_run.state = "running"
            return
        if msg.type == PROGRESS:
            return
        if msg.type == DONE:
            self.send(_ack_of(msg, self.id, now), msg.sender)
            if task_run.state not in TERMINAL:
                task_run.state = "done"
                task_run.final_pose = list(msg.body.get("pose", []))
                self.sim.trace.event(now, "task_confirmed_done", plan=run.plan_id,
                                     task=task_run.task.id)
                self._advance(run, now)
            return
        if msg.type in (FAIL, ABORT):
            if msg.type == FAIL:
                self.send(_ack_of(msg, self.id, now), msg.sender)
            if task_run.state not in TERMINAL:
                self._task_failed(run, task_run, msg.body.get("reason", msg.type.lower()), now)
            return

    def _on_ready(self, msg: ProtocolMessage, now: float) -> None:
        for run in self.plans.values():
            barrier = run.barriers.get(msg.session_id)
            if barrier is None:
                continue
            barrier, start_time = barrier_step(
                barrier, msg.sender, now, self.cfg.protocol.start_delay
            )
            run.barriers[msg.session_id] = barrier
            if start_time is not None and msg.session_id not in run.barrier_fired:
                run.barrier_fired.add(msg.session_id)
                # single-shot broadcast: an absolute timestamp cannot be
                # usefully retransmitted once its moment has passed
                group = msg.session_id.rsplit("/", 1)[-1]
                self.sim.trace.event(now, "barrier_released", barrier=msg.session_id,
                                     start_time=start_time)
                for member in sorted(barrier.members):
                    tid = next(
                        t.id for t in run.plan.tasks
                        if t.sync_group == group and t.robot == member
                    )
                    self.send(
                        ProtocolMessage(
                            type=START,
                            session_id=msg.session_id,
                            task_id=tid,
                            sender=self.id,
                            timestamp=now,
                            body={"start_time": start_time, "barrier": group},
                        ),
                        member,
                    )
            return

    def _locate(self, session_id: str) -> tuple[PlanRun | None, TaskRun | None]:
        parts = session_id.split("/")
        if len(parts) != 2:
            return None, None
        run = self.plans.get(parts[0])
        if run is None:
            return None, None
        return run, run.tasks.get(parts[1])

    # -- timers and progression ---------------------------------------------------

    def step(self, now: float) -> None:
        for plan_id in sorted(self.plans):
            run = self.plans[plan_id]
            if run.finished:
                continue
            for tid in sorted(run.tasks):
                task_run = run.tasks[tid]
                session = task_run.session
                if (
                    session is not None
                    and session.deadline is not None
                    and now >= session.deadline
                ):
                    session, out = handshake_step(session, TimeoutTick(), now,
                                                           self.cfg.protocol)
                    task_run.session = session
                    for message in out:
                        self.send(message, task_run.task.robot)
                    if session.state is HandshakeState.ABORTED and task_run.state not in TERMINAL:
                        self._task_failed(run, task_run, "handshake timeout", now)
                        continue
                if (
                    task_run.state in ("announced", "running")
                    and task_run.deadline is not None
                    and now >= task_run.deadline
                ):
                    self._task_failed(run, task_run, "timeout", now)
            self._advance(run, now)

    def _task_failed(self, run: PlanRun, task_run: TaskRun, reason: str, now: float) -> None:
        task_run.state = "failed"
        task_run.reason = reason
        self.sim.trace.event(now, "task_failed_scheduler", plan=run.plan_id,
                             task=task_run.task.id, reason=reason)
        completed = frozenset(t for t, r in run.tasks.items() if r.state == "done")
        try:
            plan = degrade(run.sched, (task_run.task.id, reason), completed=completed, now=now)
        except KeyError:
            return
        for tid in plan.cancelled:
            cancelled_run = run.tasks[tid]
            if cancelled_run.state in TERMINAL:
                continue
            was_announced = cancelled_run.state in ("announced", "running")
            cancelled_run.state = "cancelled"
            cancelled_run.reason = f"cancelled after {task_run.task.id} {reason}"
            if was_announced:
                self.send(
                    ProtocolMessage(
                        type=ABORT,
                        session_id=f"{run.plan_id}/{tid}",
                        task_id=tid,
                        sender=self.id,
                        timestamp=now,
                        body={"reason": cancelled_run.reason},
                    ),
                    cancelled_run.task.robot,
                )
        self._advance(run, now)

    def _advance(self, run: PlanRun, now: float) -> None:
        if run.finished:
            return
        self._start_stage(run, now)
        if all(r.state in TERMINAL for r in run.tasks.values()):
            run.finished = True
            self.sim.trace.event(now, "plan_finished", plan=run.plan_id,
                                 success=run.succeeded,
                                 outcomes={t: r.state for t, r in sorted(run.tasks.items())})
            self.sim.plan_finished(run, now)

    def cancel_all(self, now: float) -> None:
        for run in self.plans.values():
            if run.finished:
                continue
            for tid, task_run in sorted(run.tasks.items()):
                if task_run.state in ("announced", "running"):
                    self.send(
                        ProtocolMessage(
                            type=ABORT,
                            session_id=f"{run.plan_id}/{tid}",
                            task_id=tid,
                            sender=self.id,
                            timestamp=now,
                            body={"reason": "session deactivated"},
                        ),
                        task_run.task.robot,
                    )
                if task_run.state not in TERMINAL:
                    task_run.state = "cancelled"
            run.finished = True

    @property
    def busy(self) -> bool:
        return any(not run.finished for run in self.plans.values())


def _ack_of(msg: ProtocolMessage, sender: str, now: float) -> ProtocolMessage:
    return ProtocolMessage(
        type=ACK,
        session_id=msg.session_id,
        task_id=msg.task_id,
        sender=sender,
        timestamp=now,
        body={"of": msg.type},
    )


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

@dataclass
class PlanResult:
    plan_id: str
    command: str
    command_time: float
    finish_time: float
    success: bool
    outcomes: dict[str, str]
    first_motion_time: float | None


class Simulation:
    """Deterministic closed-loop run of script -> session -> scheduler -> robots."""

    def __init__(self, cfg: AppConfig, seed: int, backend=None):
        self.cfg = cfg
        self.seed = seed
        from .messaging import FaultModel

        self.bus = SimBus(
            FaultModel(
                latency_base=cfg.faults.latency_base,
                latency_jitter=cfg.faults.latency_jitter,
                drop_prob=cfg.faults.drop_prob,
                seed=seed,
            )
        )
        self.world = World(cfg, seed)
        self.trace = TraceLog()
        self.session = SessionMachine(phrases=cfg.phrases)
        self.scheduler = SchedulerAgent(self)
        self.robots = {rid: RobotAgent(rid, self) for rid in sorted(cfg.roster)}
        self.start_poses = {rid: pose for rid, pose in cfg.roster.items()}
        self.bus.register(SCHEDULER_ID)
        for rid in self.robots:
            self.bus.register(rid)
        if backend is not None:
            self.backend = backend
        elif cfg.parser.backend == "reference":
            self.backend = ReferenceBackend(tuple(sorted(cfg.roster)))
        else:
            self.backend = CompletionBackend()
        self.parse_config = ParseConfig(
            temperature_schedule=tuple(cfg.parser.temperature_schedule),
            max_attempts=cfg.parser.max_attempts,
        )
        self.results: list[PlanResult] = []
        self.parse_attempts: list[bool] = []
        self.now = 0.0
        self._tick = 0
        self._stopping = False
        self._pending_command_time: float | None = None
        self._plan_meta: dict[str, tuple[float, str]] = {}
        self._first_motion: dict[str, float] = {}
        self._motion_watch: dict[str, str] = {}

    # -- wiring ------------------------------------------------------------------

    def feedback(self, now: float, source: str, utterance: str) -> None:
        self.trace.event(now, "feedback", source=source, utterance=utterance)

    def note_first_motion_candidate(self, robot_id: str, task_id: str) -> None:
        self._motion_watch[robot_id] = task_id

    def plan_finished(self, run: PlanRun, now: float) -> None:
        outcomes = {tid: tr.state for tid, tr in run.tasks.items()}
        command_time, command = self._plan_meta.get(run.plan_id, (run.command_time, ""))
        self.results.append(
            PlanResult(
                plan_id=run.plan_id,
                command=command,
                command_time=command_time,
                finish_time=now,
                success=run.succeeded,
                outcomes=outcomes,
                first_motion_time=self._first_motion.get(run.plan_id),
            )
        )
        self.session.handle(
            SessionEvent(EventKind.EXECUTION_REPORT, outcomes=run.outcomes()), now
        )
        self.trace.event(now, "session_state", state=self.session.state.value)

    def submit_transcript(self, text: str, now: float) -> None:
        self.trace.event(now, "transcript", text=text)
        effects = self.session.handle_transcript(text, now)
        self._run_effects(effects, now, command_text=text)
        self.trace.event(now, "session_state", state=self.session.state.value)

    def _run_effects(self, effects, now: float, command_text: str = "") -> None:
        for effect in effects:
            if effect.kind is EffectKind.SPEAK:
                self.feedback(now, "session", effect.text or "")
            elif effect.kind is EffectKind.INVOKE_PARSE:
                self._do_parse(effect.text or "", now)
            elif effect.kind is EffectKind.DISPATCH:
                plan_id = self.scheduler.dispatch(effect.plan, now, now)
                self._plan_meta[plan_id] = (now, effect.plan.command)
                self._run_effects(
                    self.session.handle(SessionEvent(EventKind.DISPATCH_DONE), now), now
                )
            elif effect.kind is EffectKind.CANCEL_EXECUTIONS:
                self.scheduler.cancel_all(now)
                for rid in sorted(self.robots):
                    self.robots[rid].cancel_all(now)
            elif effect.kind is EffectKind.SHUTDOWN:
                self._stopping = True

    def _do_parse(self, text: str, now: float) -> None:
        ctx = self.cfg.spatial_context()
        try:
            plan = parse_command(text, self.backend, self.parse_config, ctx)
            self.parse_attempts.append(True)
            self.trace.event(now, "parse_ok", attempts=plan.parse_meta.attempts)
            event = SessionEvent(EventKind.PARSE_OK, plan=plan)
        except ParseFailure as exc:
            self.parse_attempts.append(False)
            self.trace.event(now, "parse_failed", error=str(exc),
                             attempts=len(exc.attempts))
            event = SessionEvent(EventKind.PARSE_FAILED, error=str(exc))
        self._run_effects(self.session.handle(event, now), now)

    # -- main loop -----------------------------------------------------------------

    def tick_once(self, transcripts: tuple[str, ...] = ()) -> float:
        """Advance one dt: inject transcripts, deliver messages, step agents."""
        dt = self.cfg.motion.dt
        t = self._tick * dt
        self.now = t
        for text in transcripts:
            self.submit_transcript(text, t)
        for delivery in self.bus.advance(t):
            self._route(delivery, t)
        self.scheduler.step(t)
        for rid in sorted(self.robots):
            self.robots[rid].step(t, dt)
        self.world.settle_objects()
        self._record_poses(t)
        self._tick += 1
        return t

    def quiescent(self) -> bool:
        return (
            not self.scheduler.busy
            and self.bus.pending == 0
            and all(r.active is None and not r.queue and not r.reports
                    for r in self.robots.values())
            and self.session.state in (SessionState.IDLE, SessionState.LISTENING)
        )

    def run(self, script: list[tuple[float, str]], limit: float | None = None) -> None:
        """Feed the (time, transcript) script and step until quiescence."""
        limit = limit if limit is not None else self.cfg.global_timeout
        dt = self.cfg.motion.dt
        pending = sorted(script, key=lambda item: item[0])
        idx = 0
        while True:
            t = self._tick * dt
            due: list[str] = []
            while idx < len(pending) and pending[idx][0] <= t:
                due.append(pending[idx][1])
                idx += 1
            self.tick_once(tuple(due))
            if self._stopping:
                break
            if t >= limit:
                self.trace.event(t, "global_timeout")
                self.scheduler.cancel_all(t)
                break
            if idx >= len(pending) and self.quiescent():
                break

    def _route(self, delivery: Delivery, now: float) -> None:
        if delivery.recipient == SCHEDULER_ID:
            self.scheduler.on_delivery(delivery, now)
        else:
            agent = self.robots.get(delivery.recipient)
            if agent is not None:
                agent.on_delivery(delivery, now)

    def _record_poses(self, t: float) -> None:
        for rid in sorted(self.robots):
            state = self.world.robots[rid]
            self.trace.pose(t, rid, state.pose, state.linear_v, state.angular_v)
            if abs(state.linear_v) > STOPPED_EPS or abs(state.angular_v) > STOPPED_EPS:
                task_id = self._motion_watch.get(rid)
                if task_id is not None:
                    plan_id = self._plan_of_task(rid, task_id)
                    if plan_id is not None and plan_id not in self._first_motion:
                        self._first_motion[plan_id] = t
                        self.trace.event(t, "first_motion", robot=rid, plan=plan_id)

    def _plan_of_task(self, robot_id: str, task_id: str) -> str | None:
        for plan_id in sorted(self.scheduler.plans):
            run = self.scheduler.plans[plan_id]
            task_run = run.tasks.get(task_id)
            if task_run is not None and task_run.task.robot == robot_id:
                return plan_id
        return None
