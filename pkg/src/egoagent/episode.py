"""Multi-turn episode driver.

run_episode() is the referee between a text policy and the toolbox: it
assembles the conversation, lets the policy speak, parses the turn, runs
the requested tool if the turn is a valid call, feeds the observation back
inside <information> tags, and stops on a final answer or after max_steps
turns.  Nothing a policy can emit escapes as an exception; malformed turns
consume a step, get an error observation, and the episode moves on.

With causality enforcement on (the default) the accessible corpus window
is clipped at the question's query time, so no tool can read content the
wearer had not yet recorded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol, Sequence

import requests

from .prompts import TRAIN_PROMPT, datagen_prompt
from .schemas import ToolCallValidationError
from .timebase import Timestamp, format_timestamp
from .tools import BackendError, Dispatcher, PreverifyError, preverify
from .trace import (
    FinalAnswer,
    Fragment,
    Observation,
    Step,
    Thought,
    ToolCall,
    TraceError,
    Trajectory,
    escape_text,
    parse_fragment,
    parse_tool_call,
)

MODES = ("train_format", "datagen_format")


class PolicyAdapter(Protocol):
    """Anything that maps a conversation to the next assistant turn."""

    def generate(self, messages: Sequence[Mapping[str, str]]) -> str: ...


@dataclass
class ScriptedPolicy:
    """Replays a fixed list of turns; the standard deterministic test policy."""

    steps: Sequence[str]
    _cursor: int = field(default=0, init=False)

    def generate(self, messages: Sequence[Mapping[str, str]]) -> str:
        if self._cursor >= len(self.steps):
            return ""
        text = self.steps[self._cursor]
        self._cursor += 1
        return text

    @classmethod
    def from_file(cls, path: str) -> "ScriptedPolicy":
        with open(path, encoding="utf-8") as fh:
            steps = json.load(fh)
        if not isinstance(steps, list) or not all(isinstance(s, str) for s in steps):
            raise ValueError(f"script file {path!r} must hold a JSON list of strings")
        return cls(steps=steps)


@dataclass
class CallablePolicy:
    """Wraps a plain function as a policy."""

    fn: Callable[[Sequence[Mapping[str, str]]], str]

    def generate(self, messages: Sequence[Mapping[str, str]]) -> str:
        return self.fn(messages)


@dataclass
class HttpPolicy:
    """Remote policy over JSON HTTP: {"messages": [...]} in, {"text": ...} out."""

    url: str
    timeout_s: float = 60.0
    api_key: str | None = None

    def generate(self, messages: Sequence[Mapping[str, str]]) -> str:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        response = requests.post(
            self.url, json={"messages": list(messages)}, headers=headers, timeout=self.timeout_s
        )
        response.raise_for_status()
        text = response.json()["text"]
        if not isinstance(text, str):
            raise ValueError("policy endpoint must return a string 'text' field")
        return text


@dataclass(frozen=True)
class EpisodeConfig:
    max_steps: int = 10
    mode: str = "train_format"
    identity: str = ""
    enforce_causality: bool = True

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


def assemble_system_prompt(cfg: EpisodeConfig) -> str:
    if cfg.mode == "datagen_format":
        return datagen_prompt(cfg.identity)
    return TRAIN_PROMPT


def format_user_message(question: str, options: Mapping[str, str], query_time: Timestamp) -> str:
    rendered = " ".join(f"{label}. {text}" for label, text in options.items())
    return f"Question: {question} {format_timestamp(query_time)} Options: {rendered}"


def inject_observation(context: Sequence[Mapping[str, str]], obs: Observation) -> list[dict[str, str]]:
    """Append the tool turn carrying an observation; payload text is escaped
    so it can never forge a tag when the context is re-parsed."""
    message = {"role": "tool", "content": f"<information>{escape_text(obs.payload)}</information>"}
    return [dict(m) for m in context] + [message]


def _classify_turn(text: str) -> tuple[Thought | None, ToolCall | FinalAnswer | None, str | None]:
    """Reduce one policy turn to (thought, action, format_error).

    A well-formed turn is exactly a think segment followed by one tool or
    answer segment; stray text between tags is tolerated.
    """
    try:
        fragment: Fragment = parse_fragment(text)
    except TraceError as exc:
        return None, None, f"unparseable turn: {exc}"
    segments = fragment.segments
    thought: Thought | None = None
    if segments and segments[0].kind == "think" and segments[0].body.strip():
        thought = Thought(segments[0].body)
    if len(segments) != 2 or segments[0].kind != "think":
        return thought, None, "turn must be exactly <think> followed by one <tool> or <answer>"
    kind, body = segments[1].kind, segments[1].body
    if kind == "tool":
        try:
            return thought, parse_tool_call(body), None
        except (TraceError, ToolCallValidationError) as exc:
            return thought, None, f"invalid tool call: {exc}"
    if kind == "answer":
        if not body.strip():
            return thought, None, "empty answer"
        return thought, FinalAnswer(body), None
    return thought, None, f"a step cannot contain <{kind}>"


def _normalize_answer(raw: str, options: Mapping[str, str]) -> str | None:
    wanted = raw.strip().lower()
    for label in options:
        if label.lower() == wanted:
            return label
    return None


def run_episode(
    question: str,
    options: Mapping[str, str],
    query_time: Timestamp,
    policy: PolicyAdapter,
    dispatcher: Dispatcher,
    cfg: EpisodeConfig,
) -> Trajectory:
    """Run one episode to completion.  Always halts within cfg.max_steps
    policy turns and always returns a trajectory, however hostile the
    policy output."""
    messages: list[dict[str, str]] = [
        {"role": "system", "content": assemble_system_prompt(cfg)},
        {"role": "user", "content": format_user_message(question, options, query_time)},
    ]
    ctx = dispatcher.ctx.causal_until(query_time) if cfg.enforce_causality else dispatcher.ctx
    steps: list[Step] = []
    answer: FinalAnswer | None = None

    for _ in range(cfg.max_steps):
        try:
            text = policy.generate(messages)
        except Exception as exc:  # noqa: BLE001 - policy code is caller-supplied
            text, policy_error = "", f"policy failure: {exc!r}"
        else:
            policy_error = None
        if not isinstance(text, str):
            text, policy_error = "", f"policy returned {type(text).__name__}, not str"

        thought, action, format_error = _classify_turn(text)
        if policy_error is not None:
            format_error = policy_error

        messages.append({"role": "assistant", "content": text})

        if format_error is not None or action is None:
            obs = Observation(source="error", payload=f"[format-error] {format_error}")
            steps.append(Step(thought=thought, action=None, observation=obs, format_error=format_error))
            messages = inject_observation(messages, obs)
            continue

        if isinstance(action, FinalAnswer):
            label = _normalize_answer(action.choice, options)
            if label is None:
                err = f"answer {action.choice!r} is not one of the option labels"
                obs = Observation(source="error", payload=f"[format-error] {err}")
                steps.append(Step(thought=thought, action=None, observation=obs, format_error=err))
                messages = inject_observation(messages, obs)
                continue
            answer = FinalAnswer(label)
            steps.append(Step(thought=thought, action=answer, observation=None))
            break

        if action.name == "terminate" and cfg.mode != "datagen_format":
            obs = Observation(source="terminate", payload="[tool-error] terminate is only available during data generation")
            steps.append(Step(thought=thought, action=action, observation=obs))
            messages = inject_observation(messages, obs)
            continue

        try:
            validated = preverify(action, ctx)
            obs = dispatcher.dispatch(validated)
        except (PreverifyError, BackendError) as exc:
            obs = Observation(source=action.name, payload=f"[tool-error] {exc}")
        steps.append(Step(thought=thought, action=action, observation=obs))
        messages = inject_observation(messages, obs)

        if action.name == "terminate":
            choice = str(action.arguments.get("answer", "")).strip()
            if choice:
                answer = FinalAnswer(choice)
            break

    return Trajectory(
        question=question,
        query_time=query_time,
        view_id=cfg.identity,
        steps=tuple(steps),
        answer=answer,
        options=options,
    )
