"""Structured task plans: the JSON wire format every other layer consumes.

A plan is a list of tasks, each naming a robot, an action from a closed
vocabulary, and an action-specific parameter set.  Ordering is expressed
through the optional ``sequence`` integer (equal values run concurrently,
ascending values run in stages) and the optional ``sync_group`` label
(tasks that must begin at the same instant on different robots).

Everything in this module is a pure function over immutable-by-convention
values; no I/O, no clocks, no global state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping

DEFAULT_ROSTER: tuple[str, ...] = ("robot1", "robot2")


class ActionType(str, Enum):
    """Closed action vocabulary; anything else is rejected at validation."""

    MOVE = "move"
    TURN = "turn"
    NAVIGATE = "navigate"
    FOLLOW = "follow"
    COLLECT = "collect"
    DELIVER = "deliver"
    TRANSPORT = "transport"
    SPEAK = "speak"
    WAIT = "wait"
    CONTACTLESS_TRANSPORT = "contactless_transport"


# Input-side aliases normalized before membership checks.
ACTION_ALIASES: dict[str, str] = {"rotate": "turn"}


class CoordinationMode(str, Enum):
    SINGLE_SEQUENTIAL = "single_sequential"
    MULTI_PARALLEL = "multi_parallel"
    CROSS_ROBOT_ORDERED = "cross_robot_ordered"
    SYNCHRONOUS = "synchronous"


@dataclass(frozen=True)
class ParseMeta:
    """How a plan came to be: attempt count, backend name, temperature used."""

    attempts: int = 1
    backend: str = "direct"
    temperature: float = 0.0


@dataclass
class Task:
    id: str
    robot: str
    action: ActionType
    params: dict[str, Any]
    sequence: int | None = None
    sync_group: str | None = None


@dataclass
class TaskPlan:
    command: str
    tasks: list[Task]
    parse_meta: ParseMeta = field(default_factory=ParseMeta)


@dataclass(frozen=True)
class ValidationIssue:
    """One broken rule, addressable by JSON path."""

    path: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"{self.message} at {self.path}"


class PlanValidationError(ValueError):
    """Raised when a candidate plan violates the schema; carries all issues."""

    def __init__(self, issues: Iterable[ValidationIssue]):
        self.issues: tuple[ValidationIssue, ...] = tuple(issues)
        super().__init__("; ".join(str(i) for i in self.issues) or "invalid plan")


# Per-action parameter schema.  A target is either {"x": .., "y": ..}
# (optionally with "theta") or a symbolic location string resolved later
# by the spatial-reference pass.
def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_target(v: Any) -> bool:
    if isinstance(v, str):
        return bool(v)
    if isinstance(v, Mapping):
        keys = set(v.keys())
        if not {"x", "y"} <= keys or keys - {"x", "y", "theta"}:
            return False
        return all(_is_number(v[k]) for k in keys)
    return False


def _is_string(v: Any) -> bool:
    return isinstance(v, str) and bool(v)


REQUIRED_PARAMS: dict[ActionType, dict[str, Any]] = {
    ActionType.MOVE: {"distance": _is_number},
    ActionType.TURN: {"angle": _is_number},
    ActionType.NAVIGATE: {"target": _is_target},
    ActionType.FOLLOW: {"partner": _is_string},
    ActionType.COLLECT: {"object_id": _is_string},
    ActionType.DELIVER: {"object_id": _is_string, "target": _is_target},
    ActionType.TRANSPORT: {"object_id": _is_string, "target": _is_target},
    ActionType.SPEAK: {"text": _is_string},
    ActionType.WAIT: {"duration": _is_number},
    ActionType.CONTACTLESS_TRANSPORT: {
        "object_id": _is_string,
        "target": _is_target,
        "partner": _is_string,
        "spacing": _is_number,
    },
}

OPTIONAL_PARAMS: dict[ActionType, dict[str, Any]] = {
    ActionType.FOLLOW: {"duration": _is_number},
}


def normalize_action(raw: str) -> str:
    return ACTION_ALIASES.get(raw.strip().lower(), raw.strip().lower())


def validate_plan(
    raw_json: str | bytes | Mapping[str, Any],
    roster: Iterable[str] = DEFAULT_ROSTER,
) -> TaskPlan:
    """Parse and validate a candidate plan.

    Accepts raw JSON text (or an already-decoded mapping) and returns a
    :class:`TaskPlan` satisfying every schema invariant, or raises
    :class:`PlanValidationError` listing each violated rule with its JSON
    path.  Validation is structural only: symbolic location strings are
    allowed in targets and resolved by a later pass.
    """
    roster_set = set(roster)
    issues: list[ValidationIssue] = []

    if isinstance(raw_json, Mapping):
        doc: Any = raw_json
    else:
        if isinstance(raw_json, bytes):
            try:
                raw_json = raw_json.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise PlanValidationError(
                    [ValidationIssue("$", "encoding", f"not UTF-8: {exc}")]
                ) from exc
        try:
            doc = json.loads(raw_json)
        except json.JSONDecodeError as exc:
            raise PlanValidationError(
                [ValidationIssue("$", "malformed_json", f"malformed JSON: {exc.msg}")]
            ) from exc

    if not isinstance(doc, Mapping):
        raise PlanValidationError(
            [ValidationIssue("$", "not_object", "top-level value must be an object")]
        )

    command = doc.get("command", "")
    if not isinstance(command, str):
        issues.append(ValidationIssue("$.command", "bad_type", "command must be a string"))
        command = ""

    raw_tasks = doc.get("tasks")
    if not isinstance(raw_tasks, list) or not raw_tasks:
        issues.append(
            ValidationIssue("$.tasks", "empty_tasks", "tasks must be a non-empty list")
        )
        raise PlanValidationError(issues)

    tasks: list[Task] = []
    seen_ids: set[str] = set()
    for i, entry in enumerate(raw_tasks):
        path = f"tasks[{i}]"
        if not isinstance(entry, Mapping):
            issues.append(ValidationIssue(path, "bad_type", "task must be an object"))
            continue
        task = _validate_task(entry, path, roster_set, seen_ids, issues)
        if task is not None:
            tasks.append(task)

    _validate_sync_groups(tasks, issues)

    if issues:
        raise PlanValidationError(issues)

    plan = TaskPlan(command=command, tasks=tasks, parse_meta=_parse_meta_of(doc))
    # Sequence values induce a total preorder, so the stage graph cannot
    # contain a cycle; assert the invariant anyway.
    graph = build_dependency_graph(plan)
    assert set(graph.nodes) == {t.id for t in tasks}
    return plan


def _validate_task(
    entry: Mapping[str, Any],
    path: str,
    roster: set[str],
    seen_ids: set[str],
    issues: list[ValidationIssue],
) -> Task | None:
    ok = True

    task_id = entry.get("id")
    if not _is_string(task_id):
        issues.append(ValidationIssue(f"{path}.id", "missing_id", "id must be a non-empty string"))
        ok = False
    elif task_id in seen_ids:
        issues.append(ValidationIssue(f"{path}.id", "duplicate_id", f"duplicate id {task_id!r}"))
        ok = False
    else:
        seen_ids.add(task_id)

    robot = entry.get("robot")
    if not _is_string(robot):
        issues.append(ValidationIssue(f"{path}.robot", "missing_robot", "robot must be a non-empty string"))
        ok = False
    elif robot not in roster:
        issues.append(ValidationIssue(f"{path}.robot", "unknown_robot", f"unknown robot {robot!r}"))
        ok = False

    action: ActionType | None = None
    raw_action = entry.get("action")
    if not _is_string(raw_action):
        issues.append(ValidationIssue(f"{path}.action", "missing_action", "action must be a string"))
        ok = False
    else:
        name = normalize_action(raw_action)
        try:
            action = ActionType(name)
        except ValueError:
            issues.append(
                ValidationIssue(f"{path}.action", "unknown_action", f"unknown action {raw_action!r}")
            )
            ok = False

    params = entry.get("params")
    if not isinstance(params, Mapping):
        issues.append(ValidationIssue(f"{path}.params", "missing_params", "params must be an object"))
        ok = False
    elif action is not None:
        required = REQUIRED_PARAMS[action]
        optional = OPTIONAL_PARAMS.get(action, {})
        for key, check in required.items():
            if key not in params:
                issues.append(
                    ValidationIssue(
                        f"{path}.params.{key}",
                        "missing_param",
                        f"action {action.value!r} requires param {key!r}",
                    )
                )
                ok = False
            elif not check(params[key]):
                issues.append(
                    ValidationIssue(f"{path}.params.{key}", "bad_param", f"invalid value for {key!r}")
                )
                ok = False
        for key in params:
            if key not in required and key not in optional:
                issues.append(
                    ValidationIssue(
                        f"{path}.params.{key}",
                        "unexpected_param",
                        f"action {action.value!r} does not accept param {key!r}",
                    )
                )
                ok = False
        for key, check in optional.items():
            if key in params and not check(params[key]):
                issues.append(
                    ValidationIssue(f"{path}.params.{key}", "bad_param", f"invalid value for {key!r}")
                )
                ok = False

    sequence = entry.get("sequence")
    if sequence is not None and (
        not isinstance(sequence, int) or isinstance(sequence, bool) or sequence < 0
    ):
        issues.append(
            ValidationIssue(f"{path}.sequence", "bad_sequence", "sequence must be a non-negative integer")
        )
        ok = False

    sync_group = entry.get("sync_group")
    if sync_group is not None and not _is_string(sync_group):
        issues.append(
            ValidationIssue(f"{path}.sync_group", "bad_sync_group", "sync_group must be a non-empty string")
        )
        ok = False

    extra = set(entry.keys()) - {"id", "robot", "action", "params", "sequence", "sync_group"}
    for key in sorted(extra):
        issues.append(ValidationIssue(f"{path}.{key}", "unexpected_field", f"unexpected field {key!r}"))
        ok = False

    if not ok or action is None:
        return None
    return Task(
        id=str(task_id),
        robot=str(robot),
        action=action,
        params=dict(params),
        sequence=sequence,
        sync_group=sync_group,
    )


def _validate_sync_groups(tasks: list[Task], issues: list[ValidationIssue]) -> None:
    groups: dict[str, list[Task]] = {}
    for t in tasks:
        if t.sync_group is not None:
            groups.setdefault(t.sync_group, []).append(t)
    for label in sorted(groups):
        members = groups[label]
        if len(members) < 2:
            issues.append(
                ValidationIssue(
                    "$.tasks",
                    "sync_group_too_small",
                    f"sync_group {label} has {len(members)} member, needs >=2",
                )
            )
            continue
        robots = {t.robot for t in members}
        if len(robots) < 2:
            issues.append(
                ValidationIssue(
                    "$.tasks",
                    "sync_group_one_robot",
                    f"sync_group {label} must span >=2 distinct robots",
                )
            )
        # A simultaneous start is only meaningful if the group sits in a
        # single execution stage.
        if len({t.sequence for t in members}) > 1:
            issues.append(
                ValidationIssue(
                    "$.tasks",
                    "sync_group_split_sequence",
                    f"sync_group {label} members must share one sequence value",
                )
            )


def _parse_meta_of(doc: Mapping[str, Any]) -> ParseMeta:
    meta = doc.get("parse_meta")
    if isinstance(meta, Mapping):
        return ParseMeta(
            attempts=int(meta.get("attempts", 1)),
            backend=str(meta.get("backend", "direct")),
            temperature=float(meta.get("temperature", 0.0)),
        )
    return ParseMeta()


def task_to_dict(task: Task) -> dict[str, Any]:
    out: dict[str, Any] = {
        "id": task.id,
        "robot": task.robot,
        "action": task.action.value,
        "params": dict(task.params),
    }
    if task.sequence is not None:
        out["sequence"] = task.sequence
    if task.sync_group is not None:
        out["sync_group"] = task.sync_group
    return out


def plan_to_dict(plan: TaskPlan) -> dict[str, Any]:
    """Canonical JSON form; re-validating it reproduces an identical plan."""
    return {
        "command": plan.command,
        "tasks": [task_to_dict(t) for t in plan.tasks],
        "parse_meta": {
            "attempts": plan.parse_meta.attempts,
            "backend": plan.parse_meta.backend,
            "temperature": plan.parse_meta.temperature,
        },
    }


def plan_to_json(plan: TaskPlan) -> str:
    return json.dumps(plan_to_dict(plan), sort_keys=True)


@dataclass(frozen=True)
class DependencyGraph:
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    stages: tuple[tuple[str, ...], ...]


def _stage_key(task: Task) -> tuple:
    # Unsequenced independent tasks run first; unsequenced sync groups each
    # form their own stage; sequenced tasks follow in ascending order.
    if task.sequence is None:
        if task.sync_group is None:
            return (0, "", 0)
        return (1, task.sync_group, 0)
    return (2, "", task.sequence)


def build_dependency_graph(plan: TaskPlan) -> DependencyGraph:
    """Partition tasks into concurrently-runnable stages.

    Stage order: the unsequenced independent stage (if any), then one stage
    per unsequenced sync_group (by label), then one stage per distinct
    sequence value ascending.  Edges link every task of a sequence stage to
    every task of the next sequence stage; unsequenced tasks are independent
    and contribute no edges.
    """
    buckets: dict[tuple, list[str]] = {}
    for task in sorted(plan.tasks, key=lambda t: t.id):
        buckets.setdefault(_stage_key(task), []).append(task.id)

    ordered_keys = sorted(buckets)
    stages = tuple(tuple(buckets[k]) for k in ordered_keys)

    edges: list[tuple[str, str]] = []
    seq_keys = [k for k in ordered_keys if k[0] == 2]
    for prev, nxt in zip(seq_keys, seq_keys[1:]):
        for a in buckets[prev]:
            for b in buckets[nxt]:
                edges.append((a, b))

    nodes = tuple(sorted(t.id for t in plan.tasks))
    return DependencyGraph(nodes=nodes, edges=tuple(edges), stages=stages)


def coordination_mode(plan: TaskPlan) -> CoordinationMode:
    """Classify a validated plan into one of the four coordination modes.

    Precedence: any sync_group makes the plan synchronous (the strictest
    runtime protocol); otherwise a sequence edge between distinct robots
    makes it cross-robot ordered; otherwise a single-robot plan is
    sequential and a multi-robot plan is parallel.
    """
    if any(t.sync_group is not None for t in plan.tasks):
        return CoordinationMode.SYNCHRONOUS

    by_id = {t.id: t for t in plan.tasks}
    graph = build_dependency_graph(plan)
    if any(by_id[a].robot != by_id[b].robot for a, b in graph.edges):
        return CoordinationMode.CROSS_ROBOT_ORDERED

    robots = {t.robot for t in plan.tasks}
    if len(robots) == 1:
        return CoordinationMode.SINGLE_SEQUENTIAL
    return CoordinationMode.MULTI_PARALLEL


def downstream_tasks(graph: DependencyGraph, task_id: str) -> set[str]:
    """All transitive successors of ``task_id`` along sequence edges."""
    children: dict[str, set[str]] = {n: set() for n in graph.nodes}
    for a, b in graph.edges:
        children[a].add(b)
    out: set[str] = set()
    pending = list(children.get(task_id, ()))
    while pending:
        node = pending.pop()
        if node in out:
            continue
        out.add(node)
        pending.extend(children[node])
    return out
