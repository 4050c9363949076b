"""Interaction state machine: wake word in, task plans out, feedback back.

The machine consumes transcript events (the transcription client is an
external boundary; tests feed text directly) and emits effects -- spoken
feedback records, parse invocations, plan dispatches -- that the session
runtime executes.  ``step`` is a pure total function: undefined
state/event pairs are no-ops.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from .taskmodel import TaskPlan


class SessionState(Enum):
    IDLE = "idle"
    LISTENING = "listening"
    PARSING = "parsing"
    SCHEDULING = "scheduling"
    EXECUTING = "executing"
    FEEDBACK = "feedback"


class EventKind(Enum):
    TRANSCRIPT = "transcript"
    WAKE_DETECTED = "wake_detected"
    PARSE_OK = "parse_ok"
    PARSE_FAILED = "parse_failed"
    DISPATCH_DONE = "dispatch_done"
    EXECUTION_REPORT = "execution_report"
    DEACTIVATE = "deactivate"
    EXIT = "exit"


@dataclass(frozen=True)
class SessionEvent:
    kind: EventKind
    text: str | None = None
    plan: TaskPlan | None = None
    error: str | None = None
    outcomes: tuple[tuple[str, str], ...] = ()  # (task_id, "done"|"failed"|..)


class EffectKind(Enum):
    SPEAK = "speak"
    INVOKE_PARSE = "invoke_parse"
    DISPATCH = "dispatch"
    CANCEL_EXECUTIONS = "cancel_executions"
    SHUTDOWN = "shutdown"


@dataclass(frozen=True)
class Effect:
    kind: EffectKind
    text: str | None = None
    plan: TaskPlan | None = None


@dataclass(frozen=True)
class FeedbackRecord:
    utterance: str
    time: float


@dataclass(frozen=True)
class SessionPhrases:
    wake: str = "open robot system"
    deactivate: str = "close robot system"
    exit: str = "shut down robot system"


def _normalize_words(text: str) -> list[str]:
    return re.sub(r"[^a-z0-9\s]", " ", text.lower()).split()


def detect_wake(text: str, phrase: str = SessionPhrases.wake) -> bool:
    """True iff the normalized transcript contains the activation phrase
    as a contiguous word sequence."""
    words = _normalize_words(text)
    needle = _normalize_words(phrase)
    if not needle:
        return False
    n = len(needle)
    return any(words[i : i + n] == needle for i in range(len(words) - n + 1))


def classify_transcript(text: str, phrases: SessionPhrases = SessionPhrases()) -> SessionEvent:
    """Map a raw transcript to the session event it triggers."""
    if detect_wake(text, phrases.exit):
        return SessionEvent(EventKind.EXIT, text=text)
    if detect_wake(text, phrases.deactivate):
        return SessionEvent(EventKind.DEACTIVATE, text=text)
    if detect_wake(text, phrases.wake):
        return SessionEvent(EventKind.WAKE_DETECTED, text=text)
    return SessionEvent(EventKind.TRANSCRIPT, text=text)


def step(state: SessionState, event: SessionEvent) -> tuple[SessionState, list[Effect]]:
    """One FSM transition; undefined pairs return the same state, no effects.

    The feedback state is a pass-through: an execution report emits its
    per-task feedback utterances and lands back in listening within the
    same step, so a new command can follow immediately.
    """
    kind = event.kind

    dispatched_states = (SessionState.SCHEDULING, SessionState.EXECUTING)

    if kind is EventKind.DEACTIVATE:
        effects = [Effect(EffectKind.CANCEL_EXECUTIONS)] if state in dispatched_states else []
        effects.append(Effect(EffectKind.SPEAK, text="system deactivated"))
        return SessionState.IDLE, effects

    if kind is EventKind.EXIT:
        effects = [Effect(EffectKind.CANCEL_EXECUTIONS)] if state in dispatched_states else []
        effects.append(Effect(EffectKind.SPEAK, text="shutting down"))
        effects.append(Effect(EffectKind.SHUTDOWN))
        return SessionState.IDLE, effects

    if state is SessionState.IDLE and kind is EventKind.WAKE_DETECTED:
        return SessionState.LISTENING, [Effect(EffectKind.SPEAK, text="listening")]

    if state is SessionState.LISTENING and kind is EventKind.TRANSCRIPT:
        return SessionState.PARSING, [Effect(EffectKind.INVOKE_PARSE, text=event.text)]

    if state is SessionState.PARSING and kind is EventKind.PARSE_OK:
        return SessionState.SCHEDULING, [Effect(EffectKind.DISPATCH, plan=event.plan)]

    if state is SessionState.PARSING and kind is EventKind.PARSE_FAILED:
        return SessionState.LISTENING, [
            Effect(EffectKind.SPEAK, text=f"could not understand the command: {event.error}")
        ]

    if state is SessionState.SCHEDULING and kind is EventKind.DISPATCH_DONE:
        return SessionState.EXECUTING, []

    if state is SessionState.EXECUTING and kind is EventKind.EXECUTION_REPORT:
        effects = [
            Effect(EffectKind.SPEAK, text=f"task {task_id} {outcome}")
            for task_id, outcome in event.outcomes
        ]
        effects.append(Effect(EffectKind.SPEAK, text="ready for next command"))
        return SessionState.LISTENING, effects

    return state, []


@dataclass
class SessionMachine:
    """Stateful wrapper tracking feedback records and queued wake events.

    New commands arriving while a plan executes are queued and replayed
    once the machine returns to listening.
    """

    phrases: SessionPhrases = field(default_factory=SessionPhrases)
    state: SessionState = SessionState.IDLE
    terminated: bool = False
    feedback: list[FeedbackRecord] = field(default_factory=list)
    _queued: list[SessionEvent] = field(default_factory=list)

    def handle_transcript(self, text: str, now: float) -> list[Effect]:
        return self.handle(classify_transcript(text, self.phrases), now)

    def handle(self, event: SessionEvent, now: float) -> list[Effect]:
        if self.terminated:
            return []
        if self.state in (SessionState.SCHEDULING, SessionState.EXECUTING) and event.kind in (
            EventKind.WAKE_DETECTED,
            EventKind.TRANSCRIPT,
        ):
            self._queued.append(event)
            return []
        state, effects = step(self.state, event)
        self.state = state
        out: list[Effect] = []
        for effect in effects:
            if effect.kind is EffectKind.SPEAK:
                self.feedback.append(FeedbackRecord(utterance=effect.text or "", time=now))
            if effect.kind is EffectKind.SHUTDOWN:
                self.terminated = True
            out.append(effect)
        if self.state in (SessionState.IDLE, SessionState.LISTENING) and self._queued:
            queued, self._queued = self._queued, []
            for ev in queued:
                out.extend(self.handle(ev, now))
        return out
