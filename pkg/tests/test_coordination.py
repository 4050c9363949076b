"""Handshake/barrier protocol machines, timeouts, and degradation rules."""

import pytest
from hypothesis import given, settings, strategies as st

from levifleet.coordination import (
    ABORT,
    ACK,
    ASSIGN,
    START,
    BarrierState,
    CoordinationMode,
    HandshakeSession,
    HandshakeState,
    ProtocolConfig,
    ProtocolMessage,
    Role,
    SendRequest,
    TimeoutTick,
    barrier_step,
    compute_timeout,
    degrade,
    handshake_step,
    schedule,
)
from levifleet.taskmodel import validate_plan

CFG = ProtocolConfig(retransmit_limit=3, retransmit_interval=1.0)


def new_pair(sid="s1"):
    init = HandshakeSession(session_id=sid, initiator="scheduler", responder="robot1",
                            role=Role.INITIATOR, task_id="t1")
    resp = HandshakeSession(session_id=sid, initiator="scheduler", responder="robot1",
                            role=Role.RESPONDER, task_id="t1")
    return init, resp


def run_handshake(drop_plan, limit=3):
    """Drive both machines over an abstract lossy wire.

    ``drop_plan`` is a set of 0-based indexes of transmissions to drop.
    Returns (initiator, responder, messages_sent).
    """
    cfg = ProtocolConfig(retransmit_limit=limit, retransmit_interval=1.0)
    init, resp = new_pair()
    sent = 0
    now = 0.0
    init, out = handshake_step(init, SendRequest({"task": "x"}), now, cfg)
    wire = []
    for m in out:
        if sent not in drop_plan:
            wire.append(m)
        sent += 1
    for _ in range(200):
        if wire:
            msg = wire.pop(0)
            target = "init" if msg.sender == "robot1" else "resp"
            if target == "resp":
                resp, out = handshake_step(resp, msg, now, cfg)
            else:
                init, out = handshake_step(init, msg, now, cfg)
            for m in out:
                if sent not in drop_plan:
                    wire.append(m)
                sent += 1
            continue
        if init.state is HandshakeState.ESTABLISHED and resp.state is HandshakeState.ESTABLISHED:
            break
        if init.state is HandshakeState.ABORTED:
            break
        now += 1.0
        for side in ("init", "resp"):
            session = init if side == "init" else resp
            if session.deadline is not None and now >= session.deadline:
                session, out = handshake_step(session, TimeoutTick(), now, cfg)
                for m in out:
                    if sent not in drop_plan:
                        wire.append(m)
                    sent += 1
                if side == "init":
                    init = session
                else:
                    resp = session
    return init, resp, sent


class TestHandshake:
    def test_lossless_exactly_three_messages(self):
        init, resp, sent = run_handshake(drop_plan=set())
        assert init.state is HandshakeState.ESTABLISHED
        assert resp.state is HandshakeState.ESTABLISHED
        assert sent == 3  # ASSIGN, ACK, START

    def test_first_assign_dropped_four_messages(self):
        init, resp, sent = run_handshake(drop_plan={0})
        assert init.state is HandshakeState.ESTABLISHED
        assert resp.state is HandshakeState.ESTABLISHED
        assert sent == 4  # ASSIGN(lost), ASSIGN, ACK, START

    def test_all_dropped_aborts_after_four_assigns(self):
        init, _, _ = run_handshake(drop_plan=set(range(100)))
        assert init.state is HandshakeState.ABORTED

    def test_assign_emission_count_on_total_loss(self):
        cfg = ProtocolConfig(retransmit_limit=3, retransmit_interval=1.0)
        init, _ = new_pair()
        init, out = handshake_step(init, SendRequest({}), 0.0, cfg)
        assigns = len([m for m in out if m.type == ASSIGN])
        now = 0.0
        while init.state is HandshakeState.ASSIGN_SENT:
            now = init.deadline
            init, out = handshake_step(init, TimeoutTick(), now, cfg)
            assigns += len([m for m in out if m.type == ASSIGN])
        assert assigns == 4  # initial + 3 retransmits
        assert init.state is HandshakeState.ABORTED
        assert any(m.type == ABORT for m in out)

    def test_wrong_session_ignored(self):
        init, _ = new_pair()
        init, _ = handshake_step(init, SendRequest({}), 0.0, CFG)
        stray = ProtocolMessage(type=ACK, session_id="other", task_id="t9",
                                sender="robot1", timestamp=0.0)
        after, out = handshake_step(init, stray, 0.0, CFG)
        assert after == init
        assert out == []

    def test_duplicate_assign_re_acked(self):
        _, resp = new_pair()
        assign = ProtocolMessage(type=ASSIGN, session_id="s1", task_id="t1",
                                 sender="scheduler", timestamp=0.0, body={})
        resp, out1 = handshake_step(resp, assign, 0.0, CFG)
        resp, out2 = handshake_step(resp, assign, 0.1, CFG)
        assert [m.type for m in out1] == [ACK]
        assert [m.type for m in out2] == [ACK]
        assert resp.state is HandshakeState.ACK_RECEIVED

    def test_duplicate_ack_resends_start(self):
        init, _ = new_pair()
        init, _ = handshake_step(init, SendRequest({}), 0.0, CFG)
        ack = ProtocolMessage(type=ACK, session_id="s1", task_id="t1",
                              sender="robot1", timestamp=0.0)
        init, out1 = handshake_step(init, ack, 0.0, CFG)
        init, out2 = handshake_step(init, ack, 0.5, CFG)
        assert [m.type for m in out1] == [START]
        assert [m.type for m in out2] == [START]
        assert init.state is HandshakeState.ESTABLISHED

    @settings(max_examples=200, deadline=None)
    @given(st.sets(st.integers(0, 12)))
    def test_safety_under_any_single_schedule(self, drops):
        """Responder never establishes while the initiator aborted,
        because an aborted initiator never received an ACK and so never
        sent START."""
        init, resp, _ = run_handshake(drop_plan=drops)
        if init.state is HandshakeState.ABORTED:
            assert resp.state is not HandshakeState.ESTABLISHED


class TestBarrier:
    def test_start_after_all_ready(self):
        barrier = BarrierState(group="g", members=frozenset({"r1", "r2"}))
        barrier, start = barrier_step(barrier, "r1", now=1.0)
        assert start is None
        barrier, start = barrier_step(barrier, "r2", now=2.0)
        assert start == pytest.approx(2.5)
        assert barrier.start_time == start

    def test_duplicate_ready_idempotent(self):
        barrier = BarrierState(group="g", members=frozenset({"r1", "r2"}))
        barrier, s1 = barrier_step(barrier, "r1", 0.0)
        barrier, s2 = barrier_step(barrier, "r1", 0.1)
        assert s1 is None and s2 is None
        assert barrier.ready == {"r1"}

    def test_non_member_rejected(self):
        barrier = BarrierState(group="g", members=frozenset({"r1", "r2"}))
        after, start = barrier_step(barrier, "r3", 0.0)
        assert after == barrier
        assert start is None

    def test_start_emitted_at_most_once(self):
        barrier = BarrierState(group="g", members=frozenset({"r1", "r2"}))
        barrier, _ = barrier_step(barrier, "r1", 0.0)
        barrier, s1 = barrier_step(barrier, "r2", 0.0)
        barrier, s2 = barrier_step(barrier, "r2", 5.0)
        barrier, s3 = barrier_step(barrier, "r1", 6.0)
        assert s1 is not None
        assert s2 is None and s3 is None


class TestTimeout:
    def test_formula(self):
        cfg = ProtocolConfig(timeout_base=2.0, timeout_factor=1.5)
        task = _plan_single().tasks[0]
        assert compute_timeout(task, 10.0, cfg) == pytest.approx(17.0)
        assert compute_timeout(task, 0.1, cfg) == pytest.approx(2.15)

    @given(st.floats(0.01, 1000.0))
    def test_doubling_property(self, estimate):
        cfg = ProtocolConfig(timeout_base=2.0, timeout_factor=1.5)
        task = _plan_single().tasks[0]
        t1 = compute_timeout(task, estimate, cfg)
        t2 = compute_timeout(task, 2 * estimate, cfg)
        assert t2 - t1 == pytest.approx(cfg.timeout_factor * estimate, rel=1e-9)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            compute_timeout(_plan_single().tasks[0], 0.0)


def _plan_single():
    return validate_plan(
        {"command": "x", "tasks": [
            {"id": "t1", "robot": "robot1", "action": "move", "params": {"distance": 1.0}}
        ]}
    )


def _plan_sequential():
    return validate_plan(
        {"command": "x", "tasks": [
            {"id": "t1", "robot": "robot1", "action": "move", "params": {"distance": 1.0}, "sequence": 1},
            {"id": "t2", "robot": "robot1", "action": "move", "params": {"distance": 1.0}, "sequence": 2},
        ]}
    )


def _plan_parallel():
    return validate_plan(
        {"command": "x", "tasks": [
            {"id": "t1", "robot": "robot1", "action": "move", "params": {"distance": 1.0}},
            {"id": "t2", "robot": "robot2", "action": "move", "params": {"distance": 1.0}},
        ]}
    )


def _plan_sync():
    params1 = {"object_id": "A", "target": {"x": 1.0, "y": 1.0}, "partner": "robot2", "spacing": 0.4}
    params2 = dict(params1, partner="robot1")
    return validate_plan(
        {"command": "x", "tasks": [
            {"id": "t1", "robot": "robot1", "action": "contactless_transport",
             "params": params1, "sync_group": "g"},
            {"id": "t2", "robot": "robot2", "action": "contactless_transport",
             "params": params2, "sync_group": "g"},
        ]}
    )


class TestSchedule:
    def test_sequential_two_stages_one_robot(self):
        sched = schedule(_plan_sequential())
        assert len(sched.stages) == 2
        assert all(a.robot == "robot1" for a in sched.assignments.values())
        assert sched.mode is CoordinationMode.SINGLE_SEQUENTIAL

    def test_parallel_single_stage_two_assignments(self):
        sched = schedule(_plan_parallel())
        assert len(sched.stages) == 1
        assert len(sched.assignments) == 2

    def test_sync_leader_is_lexicographically_smallest(self):
        sched = schedule(_plan_sync())
        assert sched.leader == "robot1"
        assert sched.group_leaders == {"g": "robot1"}

    def test_every_task_assigned_once(self):
        sched = schedule(_plan_sequential())
        assert sorted(sched.assignments) == ["t1", "t2"]

    def test_stage_order_matches_graph(self):
        sched = schedule(_plan_sequential())
        assert sched.stages == sched.graph.stages


class TestDegrade:
    def test_parallel_cancels_only_failed(self):
        plan = degrade(schedule(_plan_parallel()), ("t2", "timeout"))
        assert plan.cancelled == ()
        assert plan.continuing == ("t1",)

    def test_sequential_cancels_downstream(self):
        plan = degrade(schedule(_plan_sequential()), ("t1", "timeout"))
        assert plan.cancelled == ("t2",)
        assert plan.continuing == ()

    def test_sync_aborts_whole_group(self):
        plan = degrade(schedule(_plan_sync()), ("t2", "timeout"))
        assert plan.cancelled == ("t1",)
        assert all(m.type == ABORT for m in plan.notifications)

    def test_never_cancels_completed(self):
        plan = degrade(schedule(_plan_sequential()), ("t1", "timeout"), completed={"t2"})
        assert plan.cancelled == ()

    def test_unknown_task_rejected(self):
        with pytest.raises(KeyError):
            degrade(schedule(_plan_single()), ("nope", "timeout"))
