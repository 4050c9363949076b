"""Task plan schema validation, mode classification, and stage graphs."""

import json

import pytest
from hypothesis import given, strategies as st

from levifleet.taskmodel import (
    ActionType,
    CoordinationMode,
    PlanValidationError,
    build_dependency_graph,
    coordination_mode,
    downstream_tasks,
    plan_to_dict,
    plan_to_json,
    validate_plan,
)


def make_plan(tasks, command="x"):
    return {"command": command, "tasks": tasks}


def task(tid, robot="robot1", action="move", params=None, **kw):
    entry = {"id": tid, "robot": robot, "action": action, "params": params or {"distance": 1.0}}
    entry.update(kw)
    return entry


def brute_force_stages(entries):
    """Independent oracle: sort unique sequence values, bucket task ids.

    Unsequenced tasks go first (grouped by sync label, plain ones earliest),
    then one bucket per ascending sequence value.
    """
    plain = sorted(e["id"] for e in entries if e.get("sequence") is None and e.get("sync_group") is None)
    sync_labels = sorted({e["sync_group"] for e in entries if e.get("sequence") is None and e.get("sync_group")})
    stages = []
    if plain:
        stages.append(set(plain))
    for label in sync_labels:
        stages.append({e["id"] for e in entries if e.get("sequence") is None and e.get("sync_group") == label})
    for value in sorted({e["sequence"] for e in entries if e.get("sequence") is not None}):
        stages.append({e["id"] for e in entries if e.get("sequence") == value})
    return stages


class TestValidatePlan:
    def test_minimal_plan_valid(self):
        raw = '{"command":"x","tasks":[{"id":"t1","robot":"robot1","action":"move","params":{"distance":1.0}}]}'
        plan = validate_plan(raw)
        assert len(plan.tasks) == 1
        assert plan.tasks[0].action is ActionType.MOVE
        assert plan.tasks[0].params == {"distance": 1.0}

    def test_unknown_action_rejected(self):
        raw = make_plan([task("t1", action="fly", params={"distance": 1.0})])
        with pytest.raises(PlanValidationError) as exc:
            validate_plan(raw)
        issue = exc.value.issues[0]
        assert issue.rule == "unknown_action"
        assert issue.path == "tasks[0].action"
        assert "unknown action" in str(issue)

    def test_single_member_sync_group_rejected(self):
        raw = make_plan([task("t1", sync_group="g1")])
        with pytest.raises(PlanValidationError) as exc:
            validate_plan(raw)
        messages = [i.message for i in exc.value.issues]
        assert any("sync_group g1 has 1 member" in m for m in messages)

    def test_rotate_alias_normalizes_to_turn(self):
        raw = make_plan([task("t1", action="rotate", params={"angle": 1.57})])
        plan = validate_plan(raw)
        assert plan.tasks[0].action is ActionType.TURN

    def test_malformed_json(self):
        with pytest.raises(PlanValidationError) as exc:
            validate_plan(b"{nope")
        assert exc.value.issues[0].rule == "malformed_json"

    def test_duplicate_ids(self):
        raw = make_plan([task("t1"), task("t1")])
        with pytest.raises(PlanValidationError) as exc:
            validate_plan(raw)
        assert any(i.rule == "duplicate_id" for i in exc.value.issues)

    def test_unknown_robot_against_roster(self):
        raw = make_plan([task("t1", robot="robot9")])
        with pytest.raises(PlanValidationError) as exc:
            validate_plan(raw)
        assert any(i.rule == "unknown_robot" for i in exc.value.issues)

    def test_param_schema_exact_match(self):
        # missing required key
        raw = make_plan([task("t1", action="deliver", params={"object_id": "A"})])
        with pytest.raises(PlanValidationError) as exc:
            validate_plan(raw)
        assert any(i.rule == "missing_param" for i in exc.value.issues)
        # extra key
        raw = make_plan([task("t1", params={"distance": 1.0, "speed": 2.0})])
        with pytest.raises(PlanValidationError) as exc:
            validate_plan(raw)
        assert any(i.rule == "unexpected_param" for i in exc.value.issues)

    def test_symbolic_target_allowed(self):
        raw = make_plan([task("t1", action="navigate", params={"target": "dock"})])
        plan = validate_plan(raw)
        assert plan.tasks[0].params["target"] == "dock"

    def test_sync_group_split_sequence_rejected(self):
        raw = make_plan(
            [
                task("t1", robot="robot1", sync_group="g", sequence=1,
                     action="contactless_transport",
                     params={"object_id": "A", "target": "dock", "partner": "robot2", "spacing": 0.4}),
                task("t2", robot="robot2", sync_group="g", sequence=2,
                     action="contactless_transport",
                     params={"object_id": "A", "target": "dock", "partner": "robot1", "spacing": 0.4}),
            ]
        )
        with pytest.raises(PlanValidationError) as exc:
            validate_plan(raw)
        assert any(i.rule == "sync_group_split_sequence" for i in exc.value.issues)

    def test_round_trip_idempotent(self):
        raw = make_plan(
            [
                task("t1", sequence=1),
                task("t2", action="speak", params={"text": "done"}, sequence=2),
            ],
            command="two steps",
        )
        plan = validate_plan(raw)
        again = validate_plan(plan_to_json(plan))
        assert plan_to_dict(again) == plan_to_dict(plan)
        assert json.loads(plan_to_json(again)) == json.loads(plan_to_json(plan))


class TestCoordinationMode:
    def test_single_robot_two_stages_is_sequential(self):
        plan = validate_plan(make_plan([task("t1", sequence=1), task("t2", sequence=2)]))
        assert coordination_mode(plan) is CoordinationMode.SINGLE_SEQUENTIAL

    def test_two_robots_independent_is_parallel(self):
        plan = validate_plan(make_plan([task("t1"), task("t2", robot="robot2")]))
        assert coordination_mode(plan) is CoordinationMode.MULTI_PARALLEL

    def test_sync_group_is_synchronous(self):
        plan = validate_plan(
            make_plan(
                [
                    task("t1", robot="robot1", sync_group="carry",
                         action="contactless_transport",
                         params={"object_id": "A", "target": "dock", "partner": "robot2", "spacing": 0.4}),
                    task("t2", robot="robot2", sync_group="carry",
                         action="contactless_transport",
                         params={"object_id": "A", "target": "dock", "partner": "robot1", "spacing": 0.4}),
                ]
            )
        )
        assert coordination_mode(plan) is CoordinationMode.SYNCHRONOUS

    def test_cross_robot_sequence_is_ordered(self):
        plan = validate_plan(
            make_plan([task("t1", sequence=1), task("t2", robot="robot2", sequence=2)])
        )
        assert coordination_mode(plan) is CoordinationMode.CROSS_ROBOT_ORDERED

    def test_synchronous_dominates_cross_robot(self):
        plan = validate_plan(
            make_plan(
                [
                    task("t0", sequence=1),
                    task("t1", robot="robot1", sync_group="g", sequence=2,
                         action="contactless_transport",
                         params={"object_id": "A", "target": "dock", "partner": "robot2", "spacing": 0.4}),
                    task("t2", robot="robot2", sync_group="g", sequence=2,
                         action="contactless_transport",
                         params={"object_id": "A", "target": "dock", "partner": "robot1", "spacing": 0.4}),
                ]
            )
        )
        assert coordination_mode(plan) is CoordinationMode.SYNCHRONOUS

    def test_mode_invariant_under_permutation(self):
        entries = [task("t1", sequence=1), task("t2", robot="robot2", sequence=2), task("t3")]
        forward = validate_plan(make_plan(entries))
        backward = validate_plan(make_plan(entries[::-1]))
        assert coordination_mode(forward) is coordination_mode(backward)


class TestDependencyGraph:
    def test_two_element_chain(self):
        plan = validate_plan(make_plan([task("t1", sequence=1), task("t2", sequence=2)]))
        graph = build_dependency_graph(plan)
        assert [set(s) for s in graph.stages] == [{"t1"}, {"t2"}]
        assert graph.edges == (("t1", "t2"),)

    def test_parallel_default_no_edges(self):
        plan = validate_plan(make_plan([task("t1"), task("t2", robot="robot2")]))
        graph = build_dependency_graph(plan)
        assert [set(s) for s in graph.stages] == [{"t1", "t2"}]
        assert graph.edges == ()

    def test_shared_sequence_stage(self):
        entries = [
            task("t1", robot="robot1", sequence=1),
            task("t2", robot="robot2", sequence=1),
            task("t3", robot="robot1", sequence=2),
        ]
        plan = validate_plan(make_plan(entries))
        graph = build_dependency_graph(plan)
        assert [set(s) for s in graph.stages] == brute_force_stages(entries)
        assert set(graph.edges) == {("t1", "t3"), ("t2", "t3")}

    def test_unsequenced_sync_group_is_own_stage(self):
        entries = [
            task("t0"),
            task("t1", robot="robot1", sync_group="g",
                 action="contactless_transport",
                 params={"object_id": "A", "target": "dock", "partner": "robot2", "spacing": 0.4}),
            task("t2", robot="robot2", sync_group="g",
                 action="contactless_transport",
                 params={"object_id": "A", "target": "dock", "partner": "robot1", "spacing": 0.4}),
        ]
        plan = validate_plan(make_plan(entries))
        graph = build_dependency_graph(plan)
        assert [set(s) for s in graph.stages] == [{"t0"}, {"t1", "t2"}]

    @given(
        st.lists(
            st.tuples(st.sampled_from(["robot1", "robot2"]), st.one_of(st.none(), st.integers(0, 3))),
            min_size=1,
            max_size=6,
        ),
        st.randoms(),
    )
    def test_stages_invariant_under_permutation(self, rows, rnd):
        entries = [task(f"t{i}", robot=r, sequence=s) for i, (r, s) in enumerate(rows)]
        plan = validate_plan(make_plan(entries))
        stages = [set(s) for s in build_dependency_graph(plan).stages]
        assert stages == brute_force_stages(entries)

        shuffled = entries[:]
        rnd.shuffle(shuffled)
        plan2 = validate_plan(make_plan(shuffled))
        assert [set(s) for s in build_dependency_graph(plan2).stages] == stages

        # every task id appears in exactly one stage
        flat = [tid for stage in stages for tid in stage]
        assert sorted(flat) == sorted(e["id"] for e in entries)

    def test_downstream_closure(self):
        entries = [
            task("t1", sequence=1),
            task("t2", robot="robot2", sequence=2),
            task("t3", sequence=3),
            task("t4"),
        ]
        plan = validate_plan(make_plan(entries))
        graph = build_dependency_graph(plan)
        assert downstream_tasks(graph, "t1") == {"t2", "t3"}
        assert downstream_tasks(graph, "t4") == set()
