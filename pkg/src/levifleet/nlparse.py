"""Transcript-to-plan parsing with pluggable backends and retry escalation.

Two backends ship in-repo: :class:`ReferenceBackend`, a deterministic
rule grammar covering the full action vocabulary, and
:class:`CompletionBackend`, a thin JSON-over-HTTP client for a hosted
completion endpoint (configured by environment variables, never used in
tests).  ``parse_command`` drives either through the same pipeline:
prompt -> completion -> vocabulary check -> schema validation -> spatial
reference resolution, retrying at escalating temperatures on failure.
"""

from __future__ import annotations

import json
import math
import os
import re
import urllib.request
from dataclasses import dataclass, field
from typing import Any, Mapping, Protocol

from .geometry import Pose2D, Point2D
from .taskmodel import (
    DEFAULT_ROSTER,
    ActionType,
    ParseMeta,
    PlanValidationError,
    Task,
    TaskPlan,
    ValidationIssue,
    normalize_action,
    plan_to_dict,
    validate_plan,
)

DEFAULT_TEMPERATURE_SCHEDULE = (0.0, 0.3, 0.7)
DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_SYNC_SPACING = 0.4  # meters between partners in joint transport

ENDPOINT_ENV = "LEVIFLEET_LLM_ENDPOINT"
API_KEY_ENV = "LEVIFLEET_LLM_API_KEY"

DEFAULT_PROMPT_TEMPLATE = """\
You translate operator commands for a fleet of levitation robots into JSON.
Allowed actions: {vocabulary}
Robots: {roster}
Reply with exactly one JSON object matching this schema, nothing else:
{schema}
Command: "{command}"
"""

_SCHEMA_SUMMARY = (
    '{"command": str, "tasks": [{"id": str, "robot": str, "action": str, '
    '"params": object, "sequence"?: int, "sync_group"?: str}]}'
)


class BackendError(RuntimeError):
    """Transport-level backend failure, distinct from a semantic parse failure."""


@dataclass
class AttemptRecord:
    attempt: int
    temperature: float
    errors: list[str]


class ParseFailure(Exception):
    """Command could not be turned into a valid plan.

    ``span`` is the (start, end) character range of the first unmatched
    token when raised by the reference grammar; ``attempts`` carries one
    record per retry when raised by :func:`parse_command`.
    """

    def __init__(
        self,
        message: str,
        span: tuple[int, int] | None = None,
        attempts: list[AttemptRecord] | None = None,
    ):
        super().__init__(message)
        self.span = span
        self.attempts = attempts or []


class UnknownLocation(ParseFailure):
    def __init__(self, name: str):
        super().__init__(f"unknown location {name!r}")
        self.name = name


class MissingContext(ParseFailure):
    pass


class ParserBackend(Protocol):
    name: str

    def complete(self, prompt: str, temperature: float) -> str: ...


@dataclass
class ParseConfig:
    temperature_schedule: tuple[float, ...] = DEFAULT_TEMPERATURE_SCHEDULE
    max_attempts: int = DEFAULT_MAX_ATTEMPTS
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if not self.temperature_schedule:
            raise ValueError("temperature_schedule must be non-empty")
        if list(self.temperature_schedule) != sorted(self.temperature_schedule):
            raise ValueError("temperature_schedule must be non-decreasing")

    def temperature_for(self, attempt: int) -> float:
        """Temperature for a 1-based attempt; the schedule repeats its last entry."""
        idx = min(attempt - 1, len(self.temperature_schedule) - 1)
        return self.temperature_schedule[idx]


@dataclass
class SpatialContext:
    """Everything needed to ground symbolic locations into arena coordinates."""

    named_locations: dict[str, Point2D] = field(default_factory=dict)
    user_pose: Pose2D | None = None
    robot_poses: dict[str, Pose2D] = field(default_factory=dict)

    @property
    def roster(self) -> tuple[str, ...]:
        return tuple(sorted(self.robot_poses)) or DEFAULT_ROSTER


def render_prompt(template: str, roster: tuple[str, ...], command: str) -> str:
    vocabulary = ", ".join(a.value for a in ActionType)
    return template.format(
        vocabulary=vocabulary,
        roster=", ".join(roster),
        schema=_SCHEMA_SUMMARY,
        command=command,
    )


def validate_vocabulary(doc: Mapping[str, Any] | TaskPlan, roster=DEFAULT_ROSTER) -> list[ValidationIssue]:
    """Check actions against the closed vocabulary and robots against the roster.

    Runs on decoded JSON before full schema validation so that vocabulary
    violations are reported even when the rest of the structure is broken.
    Returns an empty list when everything is in-vocabulary.
    """
    issues: list[ValidationIssue] = []
    roster_set = set(roster)
    if isinstance(doc, TaskPlan):
        doc = plan_to_dict(doc)
    tasks = doc.get("tasks")
    if not isinstance(tasks, list):
        return [ValidationIssue("$.tasks", "empty_tasks", "tasks must be a list")]
    valid_actions = {a.value for a in ActionType}
    for i, entry in enumerate(tasks):
        if not isinstance(entry, Mapping):
            continue
        action = entry.get("action")
        if isinstance(action, str) and normalize_action(action) not in valid_actions:
            issues.append(
                ValidationIssue(f"tasks[{i}].action", "unknown_action", f"unknown action {action!r}")
            )
        robot = entry.get("robot")
        if isinstance(robot, str) and robot not in roster_set:
            issues.append(
                ValidationIssue(f"tasks[{i}].robot", "unknown_robot", f"unknown robot {robot!r}")
            )
    return issues


def parse_command(
    text: str,
    backend: ParserBackend,
    config: ParseConfig | None = None,
    ctx: SpatialContext | None = None,
) -> TaskPlan:
    """Run the full parsing pipeline with retry and temperature escalation.

    Raises :class:`ParseFailure` (with all attempt records) once
    ``max_attempts`` is exhausted; :class:`BackendError` propagates
    immediately since it signals transport trouble, not semantics.
    """
    if not text or not text.strip():
        raise ParseFailure("empty command")
    config = config or ParseConfig()
    ctx = ctx or SpatialContext()
    roster = ctx.roster
    prompt_base = render_prompt(config.prompt_template, roster, text.strip())

    records: list[AttemptRecord] = []
    for attempt in range(1, config.max_attempts + 1):
        temperature = config.temperature_for(attempt)
        completion = backend.complete(prompt_base, temperature)
        errors: list[str] = []
        try:
            doc = json.loads(completion)
        except json.JSONDecodeError as exc:
            errors.append(f"malformed JSON from backend: {exc.msg}")
            doc = None
        if doc is not None:
            if not isinstance(doc, Mapping):
                errors.append("backend output is not a JSON object")
            else:
                errors.extend(str(i) for i in validate_vocabulary(doc, roster))
                if not errors:
                    try:
                        plan = validate_plan(doc, roster)
                        plan = resolve_spatial_refs(plan, ctx)
                        plan.parse_meta = ParseMeta(
                            attempts=attempt, backend=backend.name, temperature=temperature
                        )
                        return plan
                    except PlanValidationError as exc:
                        errors.extend(str(i) for i in exc.issues)
                    except ParseFailure as exc:
                        errors.append(str(exc))
        records.append(AttemptRecord(attempt=attempt, temperature=temperature, errors=errors))

    raise ParseFailure(
        f"no valid plan after {config.max_attempts} attempts", attempts=records
    )


def resolve_spatial_refs(plan: TaskPlan, ctx: SpatialContext) -> TaskPlan:
    """Ground symbolic targets into coordinates.

    "here" maps to the user's position, "there" to the most recently
    mentioned named location earlier in the same plan, and any other string
    is looked up in the context's named locations.  Idempotent: numeric
    targets pass through untouched.
    """
    resolved_tasks: list[Task] = []
    last_named: Point2D | None = None
    for task in plan.tasks:
        params = dict(task.params)
        target = params.get("target")
        if isinstance(target, str):
            name = target.strip().lower()
            if name == "here":
                if ctx.user_pose is None:
                    raise MissingContext('"here" used with no user pose in context')
                point = Point2D(ctx.user_pose.x, ctx.user_pose.y)
            elif name == "there":
                if last_named is None:
                    raise MissingContext('"there" used before any named location')
                point = last_named
            elif name in ctx.named_locations:
                point = ctx.named_locations[name]
                last_named = point
            else:
                raise UnknownLocation(target)
            params["target"] = {"x": point.x, "y": point.y}
        elif isinstance(target, Mapping):
            params["target"] = dict(target)
        resolved_tasks.append(
            Task(
                id=task.id,
                robot=task.robot,
                action=task.action,
                params=params,
                sequence=task.sequence,
                sync_group=task.sync_group,
            )
        )
    return TaskPlan(command=plan.command, tasks=resolved_tasks, parse_meta=plan.parse_meta)


# ---------------------------------------------------------------------------
# Reference grammar
# ---------------------------------------------------------------------------

_UNITS = {
    "zero": 0, "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10,
    "eleven": 11, "twelve": 12, "thirteen": 13, "fourteen": 14,
    "fifteen": 15, "sixteen": 16, "seventeen": 17, "eighteen": 18,
    "nineteen": 19, "twenty": 20,
}
# Degree phrases routinely exceed twenty; tens up to ninety (plus "hundred"
# composition) keep "turn left ninety degrees" parseable.
_TENS = {
    "thirty": 30, "forty": 40, "fifty": 50, "sixty": 60,
    "seventy": 70, "eighty": 80, "ninety": 90,
}
_NUMBER_WORDS = {**_UNITS, **_TENS}

_SEQUENCE_CUES = ("after that", "afterwards", "then", "next")
_FILLER_PHRASES = ("at the same time", "in parallel", "meanwhile", "simultaneously", "please")
_SYNC_CUES = ("together", "jointly")

_MOVE_VERBS = {"move", "go", "drive", "advance"}
_TURN_VERBS = {"turn", "rotate", "spin"}
_NAV_CUES = {"to", "toward", "towards"}
_CARRY_VERBS = {"transport", "carry", "take", "bring"}
_COLLECT_VERBS = {"collect", "grab", "pickup", "fetch"}
_DELIVER_VERBS = {"deliver", "drop"}
_SPEAK_VERBS = {"speak", "say", "announce"}
_WAIT_VERBS = {"wait", "pause", "hold"}
_FOLLOW_VERBS = {"follow", "pursue"}

_ROBOT_WORD_IDS = {"one": 1, "two": 2, "three": 3, "four": 4, "1": 1, "2": 2, "3": 3, "4": 4}


@dataclass
class _Clause:
    tokens: list[str]
    start: int  # character offset of the clause in the normalized command


def _normalize(text: str) -> str:
    text = text.lower()
    text = re.sub(r"[^a-z0-9.\s-]", " ", text)
    text = re.sub(r"(?<!\d)\.(?!\d)", " ", text)  # keep decimal points only
    return re.sub(r"\s+", " ", text).strip()


def _strip_fillers(text: str) -> str:
    for phrase in _FILLER_PHRASES:
        text = text.replace(phrase, " ")
    return re.sub(r"\s+", " ", text).strip()


def _parse_number(tokens: list[str], i: int) -> tuple[float, int] | None:
    """Parse a numeral or number-word phrase starting at ``i``."""
    if i >= len(tokens):
        return None
    tok = tokens[i]
    if re.fullmatch(r"-?\d+(\.\d+)?", tok):
        return float(tok), i + 1
    if tok in ("a", "an"):
        return 1.0, i + 1
    if tok in ("half",):
        return 0.5, i + 1
    if tok not in _NUMBER_WORDS:
        return None
    value = float(_NUMBER_WORDS[tok])
    i += 1
    if i < len(tokens) and tokens[i] == "hundred":
        value *= 100.0
        i += 1
        if i < len(tokens) and tokens[i] == "and":
            i += 1
    if i < len(tokens) and tokens[i] in _NUMBER_WORDS and _NUMBER_WORDS[tokens[i]] < value:
        value += float(_NUMBER_WORDS[tokens[i]])
        i += 1
    return value, i


class ReferenceParser:
    """Deterministic rule grammar over the closed action vocabulary.

    Understands robot-name aliases ("robot one" -> robot1), sequencing cues
    ("then", "after that" -> ascending sequence stages), parallel phrasing
    (the default), and joint-transport cues ("together", "jointly" ->
    contactless transport with a shared sync group).  Identical input always
    yields an identical plan.
    """

    def __init__(self, roster: tuple[str, ...] = DEFAULT_ROSTER):
        self.roster = tuple(roster)

    # -- public entry points -------------------------------------------------

    def parse_to_dict(self, text: str) -> dict[str, Any]:
        if not text or not text.strip():
            raise ParseFailure("empty command")
        normalized = _strip_fillers(_normalize(text))
        if not normalized:
            raise ParseFailure("empty command")
        stages = self._split_stages(normalized)
        sequenced = len(stages) > 1

        tasks: list[dict[str, Any]] = []
        sync_counter = 0
        current_robots: list[str] = [self.roster[0]]
        for stage_index, stage_text in enumerate(stages, start=1):
            for clause in self._split_clauses(stage_text):
                subject = self._parse_subject(clause.tokens)
                if subject is not None:
                    current_robots, rest = subject
                else:
                    rest = clause.tokens
                if not rest:
                    raise ParseFailure("missing action", span=self._span(stage_text, clause, 0))
                sync = any(c in rest for c in _SYNC_CUES)
                if sync:
                    rest = [t for t in rest if t not in _SYNC_CUES]
                    sync_counter += 1
                new_tasks = self._parse_clause(
                    rest,
                    robots=current_robots,
                    sync_label=f"sync{sync_counter}" if sync else None,
                    stage=stage_index if sequenced else None,
                    clause=clause,
                    stage_text=stage_text,
                    token_base=len(clause.tokens) - len(rest) if not sync else 0,
                )
                for t in new_tasks:
                    t["id"] = f"t{len(tasks) + 1}"
                    tasks.append(t)
        if not tasks:
            raise ParseFailure("no tasks recognized")
        return {"command": text, "tasks": tasks}

    def parse(self, text: str, ctx: SpatialContext | None = None) -> TaskPlan:
        ctx = ctx or SpatialContext()
        doc = self.parse_to_dict(text)
        try:
            plan = validate_plan(doc, ctx.roster if ctx.robot_poses else self.roster)
        except PlanValidationError as exc:
            raise ParseFailure(f"grammar output failed validation: {exc}") from exc
        plan = resolve_spatial_refs(plan, ctx)
        plan.parse_meta = ParseMeta(attempts=1, backend="reference-grammar", temperature=0.0)
        return plan

    # -- clause machinery ----------------------------------------------------

    def _split_stages(self, text: str) -> list[str]:
        pattern = "|".join(re.escape(c) for c in _SEQUENCE_CUES)
        parts = re.split(rf"\b(?:{pattern})\b", text)
        stages = [p.strip(" ,") for p in parts if p.strip(" ,")]
        if not stages:
            raise ParseFailure("empty command")
        return stages

    def _split_clauses(self, stage_text: str) -> list[_Clause]:
        tokens = stage_text.split()
        clauses: list[_Clause] = []
        current: list[str] = []
        offset = 0
        start = 0
        for i, tok in enumerate(tokens):
            begins_subject = tok == "and" and i + 1 < len(tokens) and tokens[i + 1] in (
                "robot", "robots", "both", "all", *self.roster,
            )
            if begins_subject and current:
                clauses.append(_Clause(tokens=current, start=start))
                current = []
                start = offset + len(tok) + 1
            elif not (tok == "and" and not current):
                current.append(tok)
            offset += len(tok) + 1
        if current:
            clauses.append(_Clause(tokens=current, start=start))
        return clauses

    def _parse_subject(self, tokens: list[str]) -> tuple[tuple[list[str], list[str]]] | None:
        if not tokens:
            return None
        if tokens[0] in ("both", "all") and len(tokens) > 1 and tokens[1] in ("robots",):
            return list(self.roster), tokens[2:]
        if tokens[0] in self.roster:
            return [tokens[0]], tokens[1:]
        if tokens[0] in ("robot", "robots"):
            if len(tokens) > 1 and tokens[1] in _ROBOT_WORD_IDS:
                idx = _ROBOT_WORD_IDS[tokens[1]]
                name = f"robot{idx}"
                rest = tokens[2:]
                robots = [name]
                # "robots one and two ..."
                while len(rest) >= 2 and rest[0] == "and" and rest[1] in _ROBOT_WORD_IDS:
                    robots.append(f"robot{_ROBOT_WORD_IDS[rest[1]]}")
                    rest = rest[2:]
                return robots, rest
        return None

    def _span(self, stage_text: str, clause: _Clause, token_index: int) -> tuple[int, int]:
        upto = " ".join(clause.tokens[:token_index])
        start = clause.start + (len(upto) + 1 if upto else 0)
        if token_index < len(clause.tokens):
            return (start, start + len(clause.tokens[token_index]))
        return (start, start)

    # -- clause parsing ------------------------------------------------------

    def _parse_clause(
        self,
        tokens: list[str],
        robots: list[str],
        sync_label: str | None,
        stage: int | None,
        clause: _Clause,
        stage_text: str,
        token_base: int = 0,
    ) -> list[dict[str, Any]]:
        verb = tokens[0]
        rest = tokens[1:]

        def fail(msg: str, idx: int = 0) -> ParseFailure:
            return ParseFailure(msg, span=self._span(stage_text, clause, token_base + idx))

        def emit(action: str, params: dict[str, Any]) -> list[dict[str, Any]]:
            out = []
            for robot in robots:
                entry: dict[str, Any] = {"robot": robot, "action": action, "params": dict(params)}
                if stage is not None:
                    entry["sequence"] = stage
                if sync_label is not None and action != ActionType.CONTACTLESS_TRANSPORT.value:
                    entry["sync_group"] = sync_label
                out.append(entry)
            return out

        if verb in _TURN_VERBS:
            return emit(ActionType.TURN.value, {"angle": self._parse_angle(rest, fail)})

        if verb in _FOLLOW_VERBS:
            return emit(ActionType.FOLLOW.value, self._parse_follow(rest, fail))

        if verb in _SPEAK_VERBS:
            if not rest:
                raise fail("speak needs text")
            return emit(ActionType.SPEAK.value, {"text": " ".join(rest)})

        if verb in _WAIT_VERBS:
            parsed = _parse_number(rest, 0)
            duration = parsed[0] if parsed else 1.0
            return emit(ActionType.WAIT.value, {"duration": duration})

        if verb in _COLLECT_VERBS or (verb == "pick" and rest[:1] == ["up"]):
            if verb == "pick":
                rest = rest[1:]
            obj, i = self._parse_object(rest, fail)
            return emit(ActionType.COLLECT.value, {"object_id": obj})

        if verb in _DELIVER_VERBS:
            obj, i = self._parse_object(rest, fail)
            if i >= len(rest) or rest[i] not in _NAV_CUES:
                raise fail("deliver needs a destination", 1 + i)
            target = self._parse_location(rest[i + 1:], fail)
            return emit(ActionType.DELIVER.value, {"object_id": obj, "target": target})

        if verb in _CARRY_VERBS or verb in _MOVE_VERBS:
            # "X object A to L" is a transport; "X to L" navigates;
            # "X forward 1 meter" is a plain move.
            if rest and rest[0] == "object" or (rest[:1] == ["the"] and rest[1:2] == ["object"]):
                if rest[0] == "the":
                    rest = rest[1:]
                obj, i = self._parse_object(rest, fail)
                if i >= len(rest) or rest[i] not in _NAV_CUES:
                    raise fail("transport needs a destination", 1 + i)
                target = self._parse_location(rest[i + 1:], fail)
                if sync_label is not None:
                    if len(robots) != 2:
                        raise fail("joint transport needs exactly two robots")
                    tasks = []
                    for robot, partner in zip(robots, robots[::-1]):
                        tasks.append(
                            {
                                "robot": robot,
                                "action": ActionType.CONTACTLESS_TRANSPORT.value,
                                "params": {
                                    "object_id": obj,
                                    "target": target,
                                    "partner": partner,
                                    "spacing": DEFAULT_SYNC_SPACING,
                                },
                                "sync_group": sync_label,
                                **({"sequence": stage} if stage is not None else {}),
                            }
                        )
                    return tasks
                return emit(ActionType.TRANSPORT.value, {"object_id": obj, "target": target})
            if rest and rest[0] in _NAV_CUES:
                target = self._parse_location(rest[1:], fail)
                return emit(ActionType.NAVIGATE.value, {"target": target})
            if verb in _MOVE_VERBS:
                return emit(ActionType.MOVE.value, {"distance": self._parse_distance(rest, fail)})
            raise fail(f"cannot parse {verb!r} clause")

        if verb == "navigate":
            if rest[:1] != ["to"] and rest[:1] != ["toward"]:
                raise fail("navigate needs 'to'", 1)
            target = self._parse_location(rest[1:], fail)
            return emit(ActionType.NAVIGATE.value, {"target": target})

        raise fail(f"unrecognized action word {verb!r}")

    def _parse_angle(self, tokens: list[str], fail) -> float:
        sign = 1.0
        degrees = 90.0
        i = 0
        if i < len(tokens) and tokens[i] in ("left", "counterclockwise"):
            sign, i = 1.0, i + 1
        elif i < len(tokens) and tokens[i] in ("right", "clockwise"):
            sign, i = -1.0, i + 1
        elif i < len(tokens) and tokens[i] == "around":
            return math.radians(180.0)
        parsed = _parse_number(tokens, i)
        if parsed is not None:
            degrees, i = parsed
        return sign * math.radians(degrees)

    def _parse_distance(self, tokens: list[str], fail) -> float:
        sign = 1.0
        i = 0
        if i < len(tokens) and tokens[i] in ("forward", "forwards", "ahead"):
            i += 1
        elif i < len(tokens) and tokens[i] in ("backward", "backwards", "back"):
            sign, i = -1.0, i + 1
        parsed = _parse_number(tokens, i)
        if parsed is None:
            raise fail("move needs a distance", 1 + i)
        value, i = parsed
        return sign * value

    def _parse_object(self, tokens: list[str], fail) -> tuple[str, int]:
        i = 0
        if i < len(tokens) and tokens[i] == "the":
            i += 1
        if i < len(tokens) and tokens[i] == "object":
            i += 1
        if i >= len(tokens):
            raise fail("expected an object name", 1 + i)
        name = tokens[i]
        if len(name) == 1 and name.isalpha():
            name = name.upper()
        return name, i + 1

    def _parse_location(self, tokens: list[str], fail) -> str:
        words = [t for t in tokens if t not in ("the", "a", "an")]
        if not words:
            raise fail("expected a location")
        return "_".join(words)

    def _parse_follow(self, tokens: list[str], fail) -> dict[str, Any]:
        subject = self._parse_subject(tokens)
        if subject is None or len(subject[0]) != 1:
            raise fail("follow needs a robot name", 1)
        params: dict[str, Any] = {"partner": subject[0][0]}
        rest = subject[1]
        if rest[:1] == ["for"]:
            parsed = _parse_number(rest, 1)
            if parsed:
                params["duration"] = parsed[0]
        return params


def reference_parse(text: str, ctx: SpatialContext | None = None) -> TaskPlan:
    """Grammar-based deterministic parse: identical input, identical plan."""
    ctx = ctx or SpatialContext()
    return ReferenceParser(ctx.roster).parse(text, ctx)


class ReferenceBackend:
    """Backend adapter running the reference grammar behind the prompt API.

    Extracts the quoted command from the rendered prompt, parses it with the
    grammar, and returns the plan as JSON text.  Ignores temperature: the
    grammar is exact, so retries change nothing.
    """

    name = "reference-grammar"

    def __init__(self, roster: tuple[str, ...] = DEFAULT_ROSTER):
        self._parser = ReferenceParser(roster)

    def complete(self, prompt: str, temperature: float) -> str:
        match = re.search(r'Command: "(.*)"', prompt, re.DOTALL)
        command = match.group(1) if match else prompt
        try:
            return json.dumps(self._parser.parse_to_dict(command))
        except ParseFailure as exc:
            return json.dumps({"error": str(exc), "span": exc.span})


class CompletionBackend:
    """JSON-over-HTTP client for a hosted completion endpoint.

    The endpoint URL and API key come from ``LEVIFLEET_LLM_ENDPOINT`` and
    ``LEVIFLEET_LLM_API_KEY``; the key is sent as a bearer token and never
    logged.  Request body: {"prompt": ..., "temperature": ...}; response
    body: {"completion": ...}.
    """

    name = "completion-http"

    def __init__(self, endpoint: str | None = None, api_key: str | None = None, timeout: float = 30.0):
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV, "")
        self._api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.timeout = timeout
        if not self.endpoint:
            raise BackendError(f"no completion endpoint configured ({ENDPOINT_ENV})")

    def complete(self, prompt: str, temperature: float) -> str:
        body = json.dumps({"prompt": prompt, "temperature": temperature}).encode("utf-8")
        request = urllib.request.Request(
            self.endpoint,
            data=body,
            headers={
                "Content-Type": "application/json",
                **({"Authorization": f"Bearer {self._api_key}"} if self._api_key else {}),
            },
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                payload = json.loads(response.read().decode("utf-8"))
        except (OSError, ValueError) as exc:
            raise BackendError(f"completion request failed: {exc}") from exc
        completion = payload.get("completion")
        if not isinstance(completion, str):
            raise BackendError("completion response missing 'completion' field")
        return completion
