"""Distributed scheduling protocol: handshakes, barriers, timeouts, degradation.

Every transition here is a pure function returning a new state plus the
messages to put on the wire; an agent runtime owns each state machine and
feeds it inbox messages and timeout ticks.  The task handshake is
ASSIGN -> ACK -> START with initiator-driven ASSIGN retransmission and
responder-driven ACK re-solicitation, so any single loss is recovered.
The barrier start broadcast is the one deliberately unrepeatable message:
it carries an absolute start timestamp, and a timestamp whose moment has
passed cannot be usefully retransmitted - members that miss it abort once
their wait deadline expires (abort-on-uncertainty).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping

from .taskmodel import (
    CoordinationMode,
    DependencyGraph,
    Task,
    TaskPlan,
    build_dependency_graph,
    coordination_mode,
    downstream_tasks,
)

# Protocol message type strings, documented bit-exact in docs/protocol.md.
ASSIGN = "ASSIGN"
ACK = "ACK"
START = "START"
READY = "READY"
PROGRESS = "PROGRESS"
DONE = "DONE"
FAIL = "FAIL"
ABORT = "ABORT"
INTENT = "INTENT"


@dataclass(frozen=True)
class ProtocolMessage:
    type: str
    session_id: str
    task_id: str | None
    sender: str
    timestamp: float
    body: dict[str, Any] = field(default_factory=dict)

    def to_payload(self) -> dict[str, Any]:
        return {
            "type": self.type,
            "session_id": self.session_id,
            "task_id": self.task_id,
            "sender": self.sender,
            "timestamp": self.timestamp,
            "body": self.body,
        }

    @classmethod
    def from_payload(cls, payload: Mapping[str, Any]) -> "ProtocolMessage":
        return cls(
            type=str(payload["type"]),
            session_id=str(payload["session_id"]),
            task_id=payload.get("task_id"),
            sender=str(payload["sender"]),
            timestamp=float(payload["timestamp"]),
            body=dict(payload.get("body", {})),
        )


@dataclass(frozen=True)
class ProtocolConfig:
    retransmit_limit: int = 3
    retransmit_interval: float = 1.0
    start_delay: float = 0.5
    barrier_timeout: float = 30.0
    timeout_base: float = 2.0
    timeout_factor: float = 1.5


class HandshakeState(Enum):
    INIT = "init"
    ASSIGN_SENT = "assign_sent"
    ACK_RECEIVED = "ack_received"
    ESTABLISHED = "established"
    ABORTED = "aborted"


class Role(Enum):
    INITIATOR = "initiator"
    RESPONDER = "responder"


@dataclass(frozen=True)
class HandshakeSession:
    session_id: str
    initiator: str
    responder: str
    role: Role
    task_id: str
    state: HandshakeState = HandshakeState.INIT
    retransmits: int = 0
    deadline: float | None = None
    assign_body: dict[str, Any] = field(default_factory=dict)
    start_body: dict[str, Any] = field(default_factory=dict)

    @property
    def peer(self) -> str:
        return self.responder if self.role is Role.INITIATOR else self.initiator

    @property
    def me(self) -> str:
        return self.initiator if self.role is Role.INITIATOR else self.responder


@dataclass(frozen=True)
class SendRequest:
    """Initiator-side request to open the handshake with an ASSIGN body."""

    body: dict[str, Any]


@dataclass(frozen=True)
class TimeoutTick:
    pass


def handshake_step(
    session: HandshakeSession,
    inp: ProtocolMessage | SendRequest | TimeoutTick,
    now: float,
    config: ProtocolConfig | None = None,
) -> tuple[HandshakeSession, list[ProtocolMessage]]:
    """Advance one handshake state machine; pure, no I/O.

    Messages for a different session id are ignored without a state change.
    """
    config = config or ProtocolConfig()
    if isinstance(inp, ProtocolMessage) and inp.session_id != session.session_id:
        return session, []
    if session.role is Role.INITIATOR:
        return _initiator_step(session, inp, now, config)
    return _responder_step(session, inp, now, config)


def _msg(session: HandshakeSession, mtype: str, now: float, body: dict[str, Any]) -> ProtocolMessage:
    return ProtocolMessage(
        type=mtype,
        session_id=session.session_id,
        task_id=session.task_id,
        sender=session.me,
        timestamp=now,
        body=body,
    )


def _initiator_step(
    session: HandshakeSession,
    inp,
    now: float,
    config: ProtocolConfig,
) -> tuple[HandshakeSession, list[ProtocolMessage]]:
    state = session.state

    if isinstance(inp, SendRequest) and state is HandshakeState.INIT:
        new = replace(
            session,
            state=HandshakeState.ASSIGN_SENT,
            assign_body=dict(inp.body),
            deadline=now + config.retransmit_interval,
            retransmits=0,
        )
        return new, [_msg(new, ASSIGN, now, new.assign_body)]

    if isinstance(inp, TimeoutTick) and state is HandshakeState.ASSIGN_SENT:
        if session.retransmits < config.retransmit_limit:
            new = replace(
                session,
                retransmits=session.retransmits + 1,
                deadline=now + config.retransmit_interval,
            )
            return new, [_msg(new, ASSIGN, now, new.assign_body)]
        new = replace(session, state=HandshakeState.ABORTED, deadline=None)
        return new, [_msg(new, ABORT, now, {"reason": "handshake timeout"})]

    if isinstance(inp, ProtocolMessage):
        if inp.type == ACK and state is HandshakeState.ASSIGN_SENT:
            # Momentarily ack_received; the START emission completes
            # establishment within the same step.
            new = replace(session, state=HandshakeState.ESTABLISHED, deadline=None)
            return new, [_msg(new, START, now, dict(session.start_body))]
        if inp.type == ACK and state is HandshakeState.ESTABLISHED:
            # Duplicate ACK means the responder never saw START: resend it.
            return session, [_msg(session, START, now, dict(session.start_body))]
        if inp.type in (FAIL, ABORT) and state not in (HandshakeState.ABORTED,):
            new = replace(session, state=HandshakeState.ABORTED, deadline=None)
            return new, []

    return session, []


def _responder_step(
    session: HandshakeSession,
    inp,
    now: float,
    config: ProtocolConfig,
) -> tuple[HandshakeSession, list[ProtocolMessage]]:
    state = session.state

    if isinstance(inp, ProtocolMessage):
        if inp.type == ASSIGN:
            if state is HandshakeState.INIT:
                new = replace(
                    session,
                    state=HandshakeState.ACK_RECEIVED,
                    assign_body=dict(inp.body),
                    deadline=now + config.retransmit_interval,
                    retransmits=0,
                )
                return new, [_msg(new, ACK, now, {"of": ASSIGN})]
            # Duplicate ASSIGN: stateless re-ACK.
            return session, [_msg(session, ACK, now, {"of": ASSIGN})]
        if inp.type == START and state is HandshakeState.ACK_RECEIVED:
            new = replace(session, state=HandshakeState.ESTABLISHED,
                          start_body=dict(inp.body), deadline=None)
            return new, []
        if inp.type == ABORT and state is not HandshakeState.ESTABLISHED:
            return replace(session, state=HandshakeState.ABORTED, deadline=None), []

    if isinstance(inp, TimeoutTick) and state is HandshakeState.ACK_RECEIVED:
        if session.retransmits < config.retransmit_limit:
            # Re-solicit START with a fresh ACK.
            new = replace(
                session,
                retransmits=session.retransmits + 1,
                deadline=now + config.retransmit_interval,
            )
            return new, [_msg(new, ACK, now, {"of": ASSIGN})]
        new = replace(session, state=HandshakeState.ABORTED, deadline=None)
        return new, [_msg(new, ABORT, now, {"reason": "no start signal"})]

    return session, []


# ---------------------------------------------------------------------------
# Barrier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BarrierState:
    group: str
    members: frozenset[str]
    ready: frozenset[str] = frozenset()
    start_time: float | None = None

    @property
    def complete(self) -> bool:
        return self.ready == self.members


def barrier_step(
    barrier: BarrierState,
    ready_from: str,
    now: float,
    start_delay: float = 0.5,
) -> tuple[BarrierState, float | None]:
    """Fold one READY signal into the barrier.

    Returns the shared start time exactly once: on the step where the last
    member becomes ready.  READY from a non-member is rejected without a
    state change; duplicate READYs are idempotent.
    """
    if ready_from not in barrier.members:
        return barrier, None
    if barrier.start_time is not None:
        return replace(barrier, ready=barrier.ready | {ready_from}), None
    ready = barrier.ready | {ready_from}
    new = replace(barrier, ready=ready)
    if ready == barrier.members:
        start_time = now + start_delay
        return replace(new, start_time=start_time), start_time
    return new, None


# ---------------------------------------------------------------------------
# Scheduling and degradation
# ---------------------------------------------------------------------------

def compute_timeout(task: Task, estimate: float, config: ProtocolConfig | None = None) -> float:
    """Dispatch deadline: base slack plus a factor on the nominal duration."""
    config = config or ProtocolConfig()
    if estimate <= 0:
        raise ValueError("estimate must be positive")
    return config.timeout_base + config.timeout_factor * estimate


@dataclass(frozen=True)
class Assignment:
    task_id: str
    robot: str
    timeout: float


@dataclass(frozen=True)
class DispatchSchedule:
    plan: TaskPlan
    graph: DependencyGraph
    stages: tuple[tuple[str, ...], ...]
    assignments: dict[str, Assignment]
    mode: CoordinationMode
    leader: str | None
    group_leaders: dict[str, str]

    def task(self, task_id: str) -> Task:
        for t in self.plan.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)


def schedule(
    plan: TaskPlan,
    estimator=None,
    config: ProtocolConfig | None = None,
) -> DispatchSchedule:
    """Assign every task once, staged per the dependency graph.

    ``estimator`` maps a task to its nominal duration in seconds; when
    omitted a flat 30 s estimate is used.  For synchronous plans the leader
    of each sync group is the lexicographically smallest member robot.
    """
    config = config or ProtocolConfig()
    graph = build_dependency_graph(plan)
    mode = coordination_mode(plan)

    assignments: dict[str, Assignment] = {}
    for task in plan.tasks:
        estimate = float(estimator(task)) if estimator is not None else 30.0
        assignments[task.id] = Assignment(
            task_id=task.id,
            robot=task.robot,
            timeout=compute_timeout(task, estimate, config),
        )

    group_leaders: dict[str, str] = {}
    for task in plan.tasks:
        if task.sync_group is not None:
            current = group_leaders.get(task.sync_group)
            if current is None or task.robot < current:
                group_leaders[task.sync_group] = task.robot

    leader = min(group_leaders.values()) if group_leaders else None
    return DispatchSchedule(
        plan=plan,
        graph=graph,
        stages=graph.stages,
        assignments=assignments,
        mode=mode,
        leader=leader,
        group_leaders=group_leaders,
    )


@dataclass(frozen=True)
class DegradationPlan:
    failed_task: str
    reason: str
    cancelled: tuple[str, ...]
    continuing: tuple[str, ...]
    notifications: tuple[ProtocolMessage, ...]


def degrade(
    sched: DispatchSchedule,
    failure: tuple[str, str],
    completed: frozenset[str] | set[str] = frozenset(),
    now: float = 0.0,
) -> DegradationPlan:
    """Mode-dependent cancellation policy for a failed or timed-out task.

    Parallel plans cancel only the failed task; ordered plans cancel its
    downstream dependents; synchronous plans abort the whole sync group.
    Tasks that already reported DONE are never cancelled.
    """
    failed_id, reason = failure
    if failed_id not in sched.assignments:
        raise KeyError(f"unknown task {failed_id!r}")

    failed_task = sched.task(failed_id)
    cancelled: set[str] = set()
    if sched.mode is CoordinationMode.MULTI_PARALLEL:
        pass
    elif sched.mode is CoordinationMode.SYNCHRONOUS and failed_task.sync_group is not None:
        cancelled |= {
            t.id
            for t in sched.plan.tasks
            if t.sync_group == failed_task.sync_group and t.id != failed_id
        }
        cancelled |= downstream_tasks(sched.graph, failed_id)
    else:
        cancelled |= downstream_tasks(sched.graph, failed_id)

    cancelled -= set(completed)
    cancelled.discard(failed_id)

    continuing = tuple(
        sorted(
            t.id
            for t in sched.plan.tasks
            if t.id != failed_id and t.id not in cancelled and t.id not in completed
        )
    )
    notifications = tuple(
        ProtocolMessage(
            type=ABORT,
            session_id=f"degrade/{failed_id}",
            task_id=tid,
            sender="scheduler",
            timestamp=now,
            body={"reason": f"cancelled after {failed_id} {reason}"},
        )
        for tid in sorted(cancelled)
    )
    return DegradationPlan(
        failed_task=failed_id,
        reason=reason,
        cancelled=tuple(sorted(cancelled)),
        continuing=continuing,
        notifications=notifications,
    )
