"""Wire format for multi-turn tool-reasoning traces.

A policy turn is plain text carrying tagged segments.  A well-formed step
is a reasoning span followed by exactly one action:

    <think>why I need the logs</think><tool>{"name": "rag", ...}</tool>

or, to finish,

    <think>the evidence is conclusive</think><answer>B</answer>

Tool output comes back wrapped as <information>...</information>.  The
grammar is deliberately rigid: tags must close, never nest, and only the
four known tags exist.  Text between tags is tolerated when parsing noisy
model output (it is reported with positions) but canonical rendering never
produces any.  Segment interiors are entity-escaped on render and unescaped
on parse, so arbitrary payload text round-trips without ever forging a tag.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from typing import Any, Iterable, Mapping, Sequence, TYPE_CHECKING

from .schemas import ToolCallValidationError, validate_arguments
from .timebase import Timestamp

if TYPE_CHECKING:
    from .memory import RagResult

TAGS = ("think", "tool", "information", "answer")


class TraceError(ValueError):
    """Base class for trace grammar violations."""


class UnclosedTagError(TraceError):
    """An opened tag never closes, or a closing tag has no opener."""


class NestedTagError(TraceError):
    """A tag opens inside another tag's body."""


class UnknownTagError(TraceError):
    """A tag-shaped token with a name outside the grammar."""


class JsonSyntaxError(TraceError):
    """Tool body is not a JSON object of the expected shape."""


def escape_text(text: str) -> str:
    """Make payload text inert: no tag can survive escaping."""
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def unescape_text(text: str) -> str:
    return text.replace("&lt;", "<").replace("&gt;", ">").replace("&amp;", "&")


@dataclass(frozen=True)
class Segment:
    kind: str
    body: str


@dataclass(frozen=True)
class Stray:
    position: int
    text: str


@dataclass(frozen=True)
class Fragment:
    segments: tuple[Segment, ...]
    stray: tuple[Stray, ...] = ()


_TAG_TOKEN_RE = re.compile(r"<(/?)([A-Za-z][A-Za-z0-9_]*)>")


def parse_fragment(text: str) -> Fragment:
    """Split text into tagged segments, in order of appearance.

    Raises UnknownTagError for tag-shaped tokens outside the grammar,
    NestedTagError when a tag opens inside another, and UnclosedTagError
    for a missing or stray close.  Loose text between segments is returned
    as stray, never raised.
    """
    if not isinstance(text, str):
        raise TraceError(f"expected str, got {type(text).__name__}")
    segments: list[Segment] = []
    stray: list[Stray] = []
    pos = 0
    open_kind: str | None = None
    body_start = 0
    for m in _TAG_TOKEN_RE.finditer(text):
        closing, name = m.group(1) == "/", m.group(2)
        if name not in TAGS:
            raise UnknownTagError(f"unknown tag <{'/' if closing else ''}{name}> at offset {m.start()}")
        if open_kind is None:
            if closing:
                raise UnclosedTagError(f"closing </{name}> at offset {m.start()} has no opening tag")
            between = text[pos:m.start()]
            if between.strip():
                stray.append(Stray(pos, between))
            open_kind, body_start = name, m.end()
        elif closing and name == open_kind:
            segments.append(Segment(open_kind, unescape_text(text[body_start : m.start()])))
            open_kind = None
            pos = m.end()
        elif closing:
            raise UnclosedTagError(f"<{open_kind}> is closed by mismatched </{name}> at offset {m.start()}")
        else:
            raise NestedTagError(f"<{name}> opens inside <{open_kind}> at offset {m.start()}")
    if open_kind is not None:
        raise UnclosedTagError(f"<{open_kind}> is never closed")
    tail = text[pos:]
    if tail.strip():
        stray.append(Stray(pos, tail))
    return Fragment(tuple(segments), tuple(stray))


@dataclass(frozen=True)
class Thought:
    text: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise TraceError("thought must be non-empty")


@dataclass(frozen=True)
class ToolCall:
    """A named invocation whose arguments already passed schema validation."""

    name: str
    arguments: Mapping[str, Any]

    def __post_init__(self) -> None:
        object.__setattr__(self, "arguments", dict(self.arguments))


@dataclass(frozen=True)
class FinalAnswer:
    choice: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "choice", self.choice.strip())
        if not self.choice:
            raise TraceError("answer choice must be non-empty")


@dataclass(frozen=True)
class Observation:
    """What a tool said back.  attachments carries the structured retrieval
    result when the source was rag; it is derived data and not rendered."""

    source: str
    payload: str
    attachments: "RagResult | None" = None


@dataclass(frozen=True)
class Step:
    thought: Thought | None
    action: ToolCall | FinalAnswer | None
    observation: Observation | None = None
    format_error: str | None = None

    @property
    def is_answer(self) -> bool:
        return isinstance(self.action, FinalAnswer)


@dataclass(frozen=True)
class Trajectory:
    question: str
    query_time: Timestamp
    view_id: str
    steps: tuple[Step, ...] = ()
    answer: FinalAnswer | None = None
    options: Mapping[str, str] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))
        if self.options is not None:
            object.__setattr__(self, "options", dict(self.options))
        for i, step in enumerate(self.steps):
            if step.is_answer and i != len(self.steps) - 1:
                raise TraceError("an answer step must be the last step")


def parse_tool_call(body: str) -> ToolCall:
    """Parse the interior of a <tool> tag into a validated ToolCall.

    The body must be a JSON object {"name": ..., "arguments": {...}} and the
    arguments must satisfy the named tool's schema, including timestamp and
    window grammar for time-valued fields.
    """
    try:
        doc = json.loads(body)
    except json.JSONDecodeError as exc:
        raise JsonSyntaxError(f"tool body is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise JsonSyntaxError(f"tool body must be a JSON object, got {type(doc).__name__}")
    unexpected = set(doc) - {"name", "arguments"}
    if unexpected:
        raise JsonSyntaxError(f"tool body has unexpected key(s): {', '.join(sorted(unexpected))}")
    if "name" not in doc:
        raise JsonSyntaxError("tool body is missing 'name'")
    name = doc["name"]
    if not isinstance(name, str):
        raise JsonSyntaxError(f"tool name must be a string, got {type(name).__name__}")
    arguments = doc.get("arguments", {})
    normalized = validate_arguments(name, arguments)
    return ToolCall(name=name, arguments=normalized)


def render_tool_call(call: ToolCall) -> str:
    return json.dumps({"name": call.name, "arguments": dict(call.arguments)}, ensure_ascii=False)


def render_step(step: Step) -> str:
    parts = []
    if step.thought is not None:
        parts.append(f"<think>{escape_text(step.thought.text)}</think>")
    if isinstance(step.action, ToolCall):
        parts.append(f"<tool>{escape_text(render_tool_call(step.action))}</tool>")
    elif isinstance(step.action, FinalAnswer):
        parts.append(f"<answer>{escape_text(step.action.choice)}</answer>")
    if step.observation is not None:
        parts.append(f"<information>{escape_text(step.observation.payload)}</information>")
    return "".join(parts)


def render_trajectory(traj: Trajectory) -> str:
    return "\n".join(render_step(step) for step in traj.steps)


def _steps_from_segments(segments: Iterable[Segment]) -> tuple[tuple[Step, ...], FinalAnswer | None]:
    steps: list[Step] = []
    thought: Thought | None = None
    action: ToolCall | FinalAnswer | None = None
    error: str | None = None
    pending = False

    def flush(observation: Observation | None) -> None:
        nonlocal thought, action, error, pending
        err = error
        if err is None and action is None:
            err = "step has no action"
        steps.append(Step(thought=thought, action=action, observation=observation, format_error=err))
        thought, action, error, pending = None, None, None, False

    for seg in segments:
        if seg.kind == "think":
            if pending:
                flush(None)
            try:
                thought = Thought(seg.body)
            except TraceError:
                thought = None
            pending = True
        elif seg.kind == "tool":
            if action is not None:
                flush(None)
            try:
                action = parse_tool_call(seg.body)
            except (TraceError, ToolCallValidationError) as exc:
                action, error = None, str(exc)
            pending = True
        elif seg.kind == "answer":
            try:
                action = FinalAnswer(seg.body)
            except TraceError as exc:
                action, error = None, str(exc)
            flush(None)
        elif seg.kind == "information":
            source = action.name if isinstance(action, ToolCall) else "error"
            flush(Observation(source=source, payload=seg.body))

    if pending:
        flush(None)

    answer: FinalAnswer | None = None
    if steps:
        last = steps[-1].action
        if isinstance(last, FinalAnswer):
            answer = last
        elif isinstance(last, ToolCall) and last.name == "terminate":
            choice = str(last.arguments.get("answer", "")).strip()
            if choice:
                answer = FinalAnswer(choice)
    return tuple(steps), answer


def parse_trajectory(
    text: str,
    *,
    question: str,
    query_time: Timestamp,
    view_id: str,
    options: Mapping[str, str] | None = None,
) -> Trajectory:
    """Rebuild a trajectory from its canonical rendering.

    Metadata (question, query time, view, options) is carried outside the
    rendered text, so the caller supplies it.
    """
    steps, answer = _steps_from_segments(parse_fragment(text).segments)
    return Trajectory(
        question=question,
        query_time=query_time,
        view_id=view_id,
        steps=steps,
        answer=answer,
        options=options,
    )


@dataclass(frozen=True)
class FormatReport:
    step_ok: tuple[bool, ...]
    fraction_ok: float
    answerless: bool

    @property
    def trajectory_ok(self) -> bool:
        return self.fraction_ok == 1.0


def _step_is_ok(step: Step) -> bool:
    if step.format_error is not None or step.thought is None or step.action is None:
        return False
    if isinstance(step.action, ToolCall):
        try:
            validate_arguments(step.action.name, step.action.arguments)
        except ToolCallValidationError:
            return False
    return True


def validate_format(traj: Trajectory) -> FormatReport:
    """Per-step grammar accounting.

    A step passes when it has a thought, a schema-valid action, and no
    recorded parse failure.  An empty trajectory scores 1.0 by convention
    and is flagged answerless instead.
    """
    flags = tuple(_step_is_ok(step) for step in traj.steps)
    fraction = sum(flags) / len(flags) if flags else 1.0
    return FormatReport(step_ok=flags, fraction_ok=fraction, answerless=traj.answer is None)


def structural_key(traj: Trajectory) -> tuple:
    """Canonical comparison key: everything that survives render -> parse.

    Format error messages and rag attachments are diagnostics, so they are
    deliberately excluded; a step contributes its thought text, canonical
    action, and observation source/payload.
    """
    def action_key(action: ToolCall | FinalAnswer | None):
        if isinstance(action, ToolCall):
            return ("tool", action.name, tuple(action.arguments.items()))
        if isinstance(action, FinalAnswer):
            return ("answer", action.choice)
        return None

    return (
        traj.question,
        str(traj.query_time),
        traj.view_id,
        traj.answer.choice if traj.answer else None,
        tuple(
            (
                step.thought.text if step.thought else None,
                action_key(step.action),
                (step.observation.source, step.observation.payload) if step.observation else None,
            )
            for step in traj.steps
        ),
    )


def to_conversation(traj: Trajectory, system_prompt: str, user_message: str) -> list[dict[str, str]]:
    """Flatten a trajectory into the multi-turn conversation layout:
    system, user, then assistant/tool pairs with the answer turn last."""
    messages = [
        {"role": "system", "content": system_prompt},
        {"role": "user", "content": user_message},
    ]
    for step in traj.steps:
        messages.append({"role": "assistant", "content": render_step(replace(step, observation=None))})
        if step.observation is not None:
            messages.append(
                {"role": "tool", "content": f"<information>{escape_text(step.observation.payload)}</information>"}
            )
    return messages


def from_conversation(
    messages: Sequence[Mapping[str, str]],
    *,
    question: str,
    query_time: Timestamp,
    view_id: str,
    options: Mapping[str, str] | None = None,
) -> Trajectory:
    """Inverse of to_conversation for the assistant/tool turns."""
    text = "\n".join(m["content"] for m in messages if m.get("role") in ("assistant", "tool"))
    return parse_trajectory(
        text, question=question, query_time=query_time, view_id=view_id, options=options
    )
