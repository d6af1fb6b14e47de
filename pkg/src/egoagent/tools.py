"""Validated dispatch from parsed tool calls to pluggable backends.

Schema validation proves a call is well-shaped; preverify() proves it makes
sense against a concrete corpus: the window lies inside the recording, a
video range obeys the duration limits, a retrieval level missing from a
short corpus clamps to the coarsest one present.  Only a ValidatedCall can
be dispatched, and every dispatch is appended to the dispatcher's log so
causality can be audited after the fact.

Backends come in two families.  The mock family answers deterministically
straight out of the summary index and clip store (same call, same
observation, byte for byte), which is enough for an oracle agent to solve
synthetic questions exactly.  The HTTP family forwards calls to remote
model services speaking a minimal JSON contract.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import requests

from .memory import ClipStore, HierIndex, RagQuery, RagResult, query
from .timebase import (
    TimeRange,
    TimebaseError,
    Timestamp,
    format_range,
    format_timestamp,
    parse_range,
    parse_timestamp,
    validate_video_range,
)
from .trace import Observation, ToolCall

DEFAULT_PAYLOAD_CAP = 4000
DEFAULT_TIMEOUT_S = 10.0
TRUNCATION_MARKER = " [truncated]"


class PreverifyError(ValueError):
    """Call is schema-valid but impossible against this corpus."""


class OutOfCorpusError(PreverifyError):
    pass


class RangeInvalidError(PreverifyError):
    pass


class BackendError(Exception):
    """Tool execution failure; episodes surface these as error observations."""


class DispatchTimeout(BackendError):
    pass


class RemoteError(BackendError):
    def __init__(self, status: int, message: str):
        super().__init__(f"remote backend returned {status}: {message}")
        self.status = status
        self.message = message


class PayloadTooLarge(BackendError):
    pass


@dataclass(frozen=True)
class CorpusContext:
    """What preverify needs to know about the recording behind the tools."""

    view_id: str
    bounds: TimeRange
    levels: tuple[str, ...]
    empty: bool = False  # no content is accessible at all; every call is rejected

    def causal_until(self, query_time: Timestamp) -> "CorpusContext":
        """Clip the accessible window so no content at or past query_time leaks."""
        if query_time <= self.bounds.start:
            return replace(self, empty=True)
        end = min(self.bounds.end, query_time)
        return replace(self, bounds=TimeRange(self.bounds.start, end))

    @classmethod
    def for_index(cls, index: HierIndex) -> "CorpusContext":
        return cls(view_id=index.view_id, bounds=index.bounds, levels=index.depth)


@dataclass(frozen=True)
class ValidatedCall:
    """A call cleared for dispatch.

    content_start/content_end bound the recorded content the call may read
    (end exclusive); clamped_level is set when a rag level had to fall back
    to the coarsest available one.
    """

    call: ToolCall
    content_start: Timestamp | None = None
    content_end: Timestamp | None = None
    clamped_level: str | None = None


def preverify(call: ToolCall, ctx: CorpusContext) -> ValidatedCall:
    """Semantic checks beyond the schema, against corpus bounds and depth."""
    if ctx.empty and call.name != "terminate":
        raise OutOfCorpusError("no recorded content is accessible in this context")
    lo, hi = ctx.bounds.start, ctx.bounds.end
    args = call.arguments
    if call.name == "rag":
        start = parse_timestamp(args["start_time"])
        query_t = parse_timestamp(args["query_time"])
        if start < lo or query_t.total_frames > hi.total_frames:
            raise OutOfCorpusError(
                f"rag window {format_timestamp(start)}..{format_timestamp(query_t)} "
                f"leaves the corpus {format_range(ctx.bounds)}"
            )
        clamped = None if args["level"] in ctx.levels else ctx.levels[-1]
        return ValidatedCall(call, content_start=start, content_end=query_t, clamped_level=clamped)
    if call.name == "video_llm":
        rng = parse_range(args["range"])
        try:
            validate_video_range(rng)
        except TimebaseError as exc:
            raise RangeInvalidError(str(exc)) from exc
        if rng.start < lo or rng.end.total_frames > hi.total_frames:
            raise OutOfCorpusError(
                f"video range {format_range(rng)} leaves the corpus {format_range(ctx.bounds)}"
            )
        return ValidatedCall(call, content_start=rng.start, content_end=rng.end)
    if call.name == "vlm":
        t = parse_timestamp(args["timestamp"])
        if not ctx.bounds.contains(t):
            raise OutOfCorpusError(
                f"timestamp {format_timestamp(t)} leaves the corpus {format_range(ctx.bounds)}"
            )
        return ValidatedCall(call, content_start=t, content_end=Timestamp.from_total_frames(t.total_frames + 1))
    # terminate reads no content
    return ValidatedCall(call)


@dataclass(frozen=True)
class Limits:
    timeout_s: float = DEFAULT_TIMEOUT_S
    max_payload: int = DEFAULT_PAYLOAD_CAP
    truncate: bool = True


class Backend:
    """One tool's executor.  Subclasses implement execute()."""

    tool: str

    def execute(self, validated: ValidatedCall) -> Observation:
        raise NotImplementedError


@dataclass
class Dispatcher:
    """Routes validated calls to the one backend registered per tool.

    Shareable across concurrent episodes: backends are read-only and the
    dispatch log only ever appends.
    """

    backends: dict[str, Backend]
    ctx: CorpusContext
    limits: Limits = field(default_factory=Limits)
    dispatch_log: list[ValidatedCall] = field(default_factory=list)
    _log_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def register(self, backend: Backend) -> None:
        self.backends[backend.tool] = backend

    def dispatch(self, validated: ValidatedCall) -> Observation:
        backend = self.backends.get(validated.call.name)
        if backend is None:
            raise BackendError(f"no backend registered for tool {validated.call.name!r}")
        with self._log_lock:
            self.dispatch_log.append(validated)
        obs = backend.execute(validated)
        payload = obs.payload
        if len(payload) > self.limits.max_payload:
            if not self.limits.truncate:
                raise PayloadTooLarge(
                    f"{validated.call.name} payload is {len(payload)} chars, cap is {self.limits.max_payload}"
                )
            payload = payload[: self.limits.max_payload] + TRUNCATION_MARKER
            obs = replace(obs, payload=payload)
        return obs


def format_hits(result: RagResult) -> str:
    if not result.hits:
        text = "No matching entries found."
    else:
        lines = [
            f"[{hit.level}] {format_range(hit.range)} (matched: {', '.join(hit.matched_keywords)}): {hit.text}"
            for hit in result.hits
        ]
        if result.truncated:
            lines.append("(more matches omitted)")
        text = "\n".join(lines)
    if result.clamped_to is not None:
        text = f"(level clamped to {result.clamped_to})\n" + text
    return text


@dataclass
class MockRagBackend(Backend):
    """Keyword retrieval straight from the summary index."""

    index: HierIndex
    max_hits: int | None = None
    tool: str = field(default="rag", init=False)

    def execute(self, validated: ValidatedCall) -> Observation:
        args = validated.call.arguments
        q = RagQuery(
            level=args["level"],
            keywords=tuple(args["keywords"]),
            start_time=parse_timestamp(args["start_time"]),
            query_time=parse_timestamp(args["query_time"]),
        )
        kwargs = {} if self.max_hits is None else {"max_hits": self.max_hits}
        result = query(self.index, q, **kwargs)
        return Observation(source="rag", payload=format_hits(result), attachments=result)


@dataclass
class MockVideoBackend(Backend):
    """Emulates a short-window video model by returning every clip log the
    requested range touches, in order."""

    store: ClipStore
    tool: str = field(default="video_llm", init=False)

    def execute(self, validated: ValidatedCall) -> Observation:
        rng = parse_range(validated.call.arguments["range"])
        clips = self.store.clips_in(rng)
        if not clips:
            payload = f"No recorded clips in {format_range(rng)}."
        else:
            payload = "\n".join(f"{format_range(c.range)}: {c.text}" for c in clips)
        return Observation(source="video_llm", payload=payload)


@dataclass
class MockVlmBackend(Backend):
    """Emulates single-frame analysis by returning the one clip log that
    covers the timestamp."""

    store: ClipStore
    tool: str = field(default="vlm", init=False)

    def execute(self, validated: ValidatedCall) -> Observation:
        t = parse_timestamp(validated.call.arguments["timestamp"])
        clip = self.store.clip_at(t)
        if clip is None:
            payload = f"No recorded clip covers {format_timestamp(t)}."
        else:
            payload = f"{format_range(clip.range)}: {clip.text}"
        return Observation(source="vlm", payload=payload)


@dataclass
class TerminateBackend(Backend):
    """Synthetic observation that closes a generation-mode episode."""

    tool: str = field(default="terminate", init=False)

    def execute(self, validated: ValidatedCall) -> Observation:
        return Observation(source="terminate", payload="Episode terminated.")


def mock_rag(index: HierIndex, max_hits: int | None = None) -> Backend:
    return MockRagBackend(index=index, max_hits=max_hits)


def mock_video_llm(store: ClipStore) -> Backend:
    return MockVideoBackend(store=store)


def mock_vlm(store: ClipStore) -> Backend:
    return MockVlmBackend(store=store)


def make_mock_dispatcher(
    index: HierIndex,
    store: ClipStore,
    limits: Limits | None = None,
    max_hits: int | None = None,
) -> Dispatcher:
    """The standard all-mock toolbox over one view's corpus."""
    backends: dict[str, Backend] = {}
    dispatcher = Dispatcher(
        backends=backends,
        ctx=CorpusContext.for_index(index),
        limits=limits or Limits(),
    )
    for backend in (mock_rag(index, max_hits=max_hits), mock_video_llm(store), mock_vlm(store), TerminateBackend()):
        dispatcher.register(backend)
    return dispatcher


@dataclass
class HttpToolBackend(Backend):
    """Remote tool over JSON HTTP.

    Request: {"tool": ..., "arguments": {...}, "view_id": ...}
    Response: {"payload": "..."}; any non-2xx status maps to RemoteError.
    """

    tool: str
    url: str
    view_id: str = ""
    api_key: str | None = None
    timeout_s: float = DEFAULT_TIMEOUT_S
    session: Callable[..., requests.Response] | None = None

    def execute(self, validated: ValidatedCall) -> Observation:
        body = {
            "tool": validated.call.name,
            "arguments": dict(validated.call.arguments),
            "view_id": self.view_id,
        }
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        post = self.session or requests.post
        try:
            response = post(self.url, json=body, headers=headers, timeout=self.timeout_s)
        except requests.Timeout as exc:
            raise DispatchTimeout(f"{self.tool} backend timed out after {self.timeout_s}s") from exc
        except requests.RequestException as exc:
            raise BackendError(f"{self.tool} backend unreachable: {exc}") from exc
        if not 200 <= response.status_code < 300:
            raise RemoteError(response.status_code, response.text[:200])
        try:
            payload = response.json()["payload"]
        except (ValueError, KeyError) as exc:
            raise BackendError(f"{self.tool} backend sent a malformed response") from exc
        if not isinstance(payload, str):
            raise BackendError(f"{self.tool} backend payload must be a string")
        return Observation(source=self.tool, payload=payload)


def http_backend_from_env(tool: str, view_id: str, environ: Mapping[str, str]) -> HttpToolBackend | None:
    """Build a remote backend from EGOAGENT_<TOOL>_URL / _API_KEY, if set."""
    prefix = f"EGOAGENT_{tool.upper()}"
    url = environ.get(f"{prefix}_URL")
    if not url:
        return None
    return HttpToolBackend(
        tool=tool,
        url=url,
        view_id=view_id,
        api_key=environ.get(f"{prefix}_API_KEY"),
        timeout_s=float(environ.get("EGOAGENT_TIMEOUT_S", DEFAULT_TIMEOUT_S)),
    )
