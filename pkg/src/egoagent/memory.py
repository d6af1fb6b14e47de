"""Hierarchical memory bank over 30-second clip logs.

Leaves are caption+transcript logs for clips of at most 30 seconds.
build_hierarchy() aggregates them bottom-up into 10-minute, hour, day and
week summaries.  Aggregate nodes snap to wall-clock buckets (minute
multiples of ten, whole hours, midnights) but split wherever the recording
itself has a gap, so every node range is exactly the union of its
children's ranges.  The week level is the one exception: when day nodes
exist there is exactly one week root spanning all of them.

How deep the tree goes depends on how long the corpus is: the 10-minute
level appears once the recording spans at least 10 minutes, the hour level
at one hour, and the day level (plus the week root) once the recording
covers a full day or touches more than one day.

Queries enter at a coarse level ("week", "day" or "hour"), keep the nodes
there that overlap the query window and match a keyword, then step down one
level and return the matching children.  A week query therefore yields day
summaries, a day query hour summaries, and an hour query 10-minute
summaries; issuing a finer query is the caller's move.  Levels absent from
a short corpus clamp to the coarsest available one, and the result says so.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .timebase import (
    FPS,
    FRAMES_PER_DAY,
    FRAMES_PER_HOUR,
    TimeRange,
    Timestamp,
    format_range,
    format_timestamp,
    parse_range,
)

LEVELS = ("clip30s", "min10", "hour", "day", "week")
QUERY_LEVELS = ("week", "day", "hour")
_LEVEL_RANK = {name: i for i, name in enumerate(LEVELS)}

MAX_CLIP_FRAMES = 30 * FPS
MIN10_FRAMES = 600 * FPS
DEFAULT_MAX_HITS = 20
INDEX_SCHEMA_VERSION = 1

Summarizer = Callable[[str, Sequence[str], TimeRange], str]
Matcher = Callable[[str, Sequence[str]], tuple[str, ...]]


class ClipStoreError(ValueError):
    """Base class for clip ingestion failures."""


class OverlapError(ClipStoreError):
    """Two clips of one view share at least one frame."""


class DurationError(ClipStoreError):
    """A clip is longer than 30 seconds."""


class MixedViewError(ClipStoreError):
    """Records from more than one camera view in a single store."""


class QueryError(ValueError):
    """Base class for malformed retrieval queries."""


class EmptyKeywordsError(QueryError):
    pass


class BadWindowError(QueryError):
    pass


class IndexIoError(Exception):
    """Index file unreadable or structurally broken."""


class SchemaVersionError(IndexIoError):
    """Index file written under an unsupported schema version."""


@dataclass(frozen=True)
class ClipLog:
    """Caption plus speech transcript for one recorded clip."""

    view_id: str
    range: TimeRange
    caption: str
    asr: str = ""

    @property
    def text(self) -> str:
        return f"{self.caption} {self.asr}".strip()


@dataclass(frozen=True)
class ClipStore:
    """Chronologically sorted, non-overlapping clips of a single view."""

    view_id: str
    clips: tuple[ClipLog, ...]

    @property
    def bounds(self) -> TimeRange:
        return TimeRange(self.clips[0].range.start, self.clips[-1].range.end)

    def clip_at(self, t: Timestamp) -> ClipLog | None:
        for clip in self.clips:
            if clip.range.contains(t):
                return clip
        return None

    def clips_in(self, window: TimeRange) -> tuple[ClipLog, ...]:
        return tuple(c for c in self.clips if c.range.intersects(window))


@dataclass(frozen=True)
class SummaryNode:
    id: str
    level: str
    range: TimeRange
    text: str
    children: tuple[str, ...] = ()


@dataclass(frozen=True)
class RagQuery:
    """Keyword search over a window [start_time, query_time)."""

    level: str
    keywords: tuple[str, ...]
    start_time: Timestamp
    query_time: Timestamp

    def __post_init__(self) -> None:
        if self.level not in QUERY_LEVELS:
            raise QueryError(f"level must be one of {'|'.join(QUERY_LEVELS)}, got {self.level!r}")
        object.__setattr__(self, "keywords", tuple(self.keywords))
        if not self.keywords:
            raise EmptyKeywordsError("query needs at least one keyword")
        if self.start_time.total_frames >= self.query_time.total_frames:
            raise BadWindowError(
                f"start_time {self.start_time} must be strictly before query_time {self.query_time}"
            )


@dataclass(frozen=True)
class RagHit:
    level: str
    range: TimeRange
    text: str
    matched_keywords: tuple[str, ...]


@dataclass(frozen=True)
class RagResult:
    hits: tuple[RagHit, ...]
    truncated: bool
    clamped_to: str | None = None


@dataclass(frozen=True)
class HierIndex:
    """Immutable summary tree; safe to share across concurrent queries."""

    view_id: str
    levels: Mapping[str, tuple[SummaryNode, ...]]
    build_errors: tuple[str, ...] = ()
    _by_id: Mapping[str, SummaryNode] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        by_id = {node.id: node for nodes in self.levels.values() for node in nodes}
        object.__setattr__(self, "_by_id", by_id)

    @property
    def depth(self) -> tuple[str, ...]:
        """Present levels, finest to coarsest."""
        return tuple(self.levels.keys())

    @property
    def bounds(self) -> TimeRange:
        leaves = self.levels["clip30s"]
        return TimeRange(leaves[0].range.start, leaves[-1].range.end)

    def node(self, node_id: str) -> SummaryNode:
        return self._by_id[node_id]

    def children_of(self, node: SummaryNode) -> tuple[SummaryNode, ...]:
        return tuple(self._by_id[cid] for cid in node.children)


def ingest_clip_logs(records: Iterable[ClipLog]) -> ClipStore:
    """Sort and check clip logs: one view, clip lengths <= 30 s, no overlap."""
    clips = sorted(records, key=lambda c: c.range.start.total_frames)
    if not clips:
        raise ClipStoreError("no clip logs to ingest")
    views = {c.view_id for c in clips}
    if len(views) > 1:
        raise MixedViewError(f"expected one view, got {sorted(views)}")
    for clip in clips:
        if clip.range.duration.frames > MAX_CLIP_FRAMES:
            raise DurationError(
                f"clip {format_range(clip.range)} exceeds 30 s ({clip.range.duration.frames} frames)"
            )
    for prev, cur in zip(clips, clips[1:]):
        if cur.range.start.total_frames < prev.range.end.total_frames:
            raise OverlapError(f"clips {format_range(prev.range)} and {format_range(cur.range)} overlap")
    return ClipStore(view_id=clips[0].view_id, clips=tuple(clips))


def concat_summary(level: str, child_texts: Sequence[str], rng: TimeRange) -> str:
    """Deterministic fallback summarizer: a header plus all child text.

    Keeps every child token verbatim, which is what makes exact containment
    checks (and keyword cascades) possible without a language model.
    """
    return f"[{level} {format_range(rng)}] " + " ".join(child_texts)


def _bucket(level: str, t: Timestamp) -> tuple:
    if level == "min10":
        return (t.day, t.hour, t.minute // 10)
    if level == "hour":
        return (t.day, t.hour)
    if level == "day":
        return (t.day,)
    return ()  # week: a single bucket


def _node_id(level: str, rng: TimeRange) -> str:
    return f"{level}/{format_range(rng)}"


def _levels_for_span(store: ClipStore) -> list[str]:
    span = store.bounds.duration.frames
    first = store.bounds.start
    last_frame = Timestamp.from_total_frames(store.bounds.end.total_frames - 1)
    multi_day = last_frame.day != first.day
    wanted = ["clip30s"]
    if span >= MIN10_FRAMES:
        wanted.append("min10")
    if span >= FRAMES_PER_HOUR:
        wanted.append("hour")
    if span >= FRAMES_PER_DAY or multi_day:
        # Close the chain downward so every parent is exactly one step coarser.
        for lvl in ("min10", "hour"):
            if lvl not in wanted:
                wanted.append(lvl)
        wanted.extend(["day", "week"])
    return sorted(set(wanted), key=_LEVEL_RANK.__getitem__)


def build_hierarchy(store: ClipStore, summarizer: Summarizer = concat_summary) -> HierIndex:
    """Build the summary tree bottom-up.

    Grouping starts a new parent at every wall-clock bucket change and at
    every recording gap; the week root (when present) is the single
    exception and always spans all day nodes.  A summarizer exception never
    drops a node: the node keeps the concatenation fallback text and the
    failure is recorded in build_errors.
    """
    leaves = tuple(
        SummaryNode(_node_id("clip30s", c.range), "clip30s", c.range, c.text) for c in store.clips
    )
    levels: dict[str, tuple[SummaryNode, ...]] = {"clip30s": leaves}
    errors: list[str] = []

    def summarize(level: str, children: Sequence[SummaryNode], rng: TimeRange) -> str:
        texts = [c.text for c in children]
        try:
            return summarizer(level, texts, rng)
        except Exception as exc:  # noqa: BLE001 - backend code is caller-supplied
            errors.append(f"{_node_id(level, rng)}: {exc!r}")
            return concat_summary(level, texts, rng)

    def roll_up(level: str, children: Sequence[SummaryNode]) -> tuple[SummaryNode, ...]:
        groups: list[list[SummaryNode]] = []
        for child in children:
            fresh = (
                not groups
                or _bucket(level, child.range.start) != _bucket(level, groups[-1][0].range.start)
                or child.range.start.total_frames != groups[-1][-1].range.end.total_frames
            )
            if level == "week":
                fresh = not groups
            if fresh:
                groups.append([child])
            else:
                groups[-1].append(child)
        nodes = []
        for group in groups:
            rng = TimeRange(group[0].range.start, group[-1].range.end)
            nodes.append(
                SummaryNode(
                    _node_id(level, rng),
                    level,
                    rng,
                    summarize(level, group, rng),
                    tuple(c.id for c in group),
                )
            )
        return tuple(nodes)

    for level in _levels_for_span(store)[1:]:
        levels[level] = roll_up(level, levels[LEVELS[_LEVEL_RANK[level] - 1]])
    return HierIndex(view_id=store.view_id, levels=levels, build_errors=tuple(errors))


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def _tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def match_keywords(text: str, keywords: Sequence[str]) -> tuple[str, ...]:
    """Default matcher: case-insensitive whole-token (phrase) containment."""
    toks = _tokens(text)
    single = set(toks)
    matched = []
    for kw in keywords:
        kw_toks = _tokens(kw)
        if not kw_toks:
            continue
        if len(kw_toks) == 1:
            if kw_toks[0] in single:
                matched.append(kw)
            continue
        n = len(kw_toks)
        if any(toks[i : i + n] == kw_toks for i in range(len(toks) - n + 1)):
            matched.append(kw)
    return tuple(matched)


def _intersects_window(rng: TimeRange, start: Timestamp, end: Timestamp) -> bool:
    return rng.start < end and start < rng.end


def query(
    index: HierIndex,
    q: RagQuery,
    *,
    matcher: Matcher = match_keywords,
    max_hits: int | None = DEFAULT_MAX_HITS,
) -> RagResult:
    """Top-down keyword retrieval.

    Entry happens at q.level (clamped to the coarsest present level when the
    corpus is too short to have it).  Matching entry nodes are cascaded one
    level down and the matching children inside the window come back as
    hits, chronologically ordered and capped at max_hits.
    """
    depth = index.depth
    entry = q.level if q.level in depth else depth[-1]
    clamped_to = entry if entry != q.level else None

    lo, hi = q.start_time, q.query_time
    parents = [
        node
        for node in index.levels[entry]
        if _intersects_window(node.range, lo, hi) and matcher(node.text, q.keywords)
    ]

    finer = LEVELS[_LEVEL_RANK[entry] - 1] if _LEVEL_RANK[entry] > 0 and LEVELS[_LEVEL_RANK[entry] - 1] in depth else None
    hits: list[RagHit] = []
    if finer is None:
        for node in parents:
            hits.append(RagHit(node.level, node.range, node.text, matcher(node.text, q.keywords)))
    else:
        for parent in parents:
            for child in index.children_of(parent):
                if not _intersects_window(child.range, lo, hi):
                    continue
                matched = matcher(child.text, q.keywords)
                if matched:
                    hits.append(RagHit(child.level, child.range, child.text, matched))

    truncated = max_hits is not None and len(hits) > max_hits
    if truncated:
        hits = hits[:max_hits]
    return RagResult(hits=tuple(hits), truncated=truncated, clamped_to=clamped_to)


def _node_to_dict(node: SummaryNode) -> dict:
    return {
        "id": node.id,
        "level": node.level,
        "range": format_range(node.range),
        "text": node.text,
        "children": list(node.children),
    }


def save_index(index: HierIndex, path: str | os.PathLike) -> None:
    """Write the index as one self-describing JSON document, atomically."""
    doc = {
        "schema_version": INDEX_SCHEMA_VERSION,
        "view_id": index.view_id,
        "depth": list(index.depth),
        "levels": {level: [_node_to_dict(n) for n in nodes] for level, nodes in index.levels.items()},
        "build_errors": list(index.build_errors),
    }
    data = json.dumps(doc, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_index(path: str | os.PathLike) -> HierIndex:
    """Read an index document; a broken file never yields a partial index."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IndexIoError(f"cannot read index file {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IndexIoError(f"index file {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise IndexIoError(f"index file {path!r} is not a JSON object")
    version = doc.get("schema_version")
    if version != INDEX_SCHEMA_VERSION:
        raise SchemaVersionError(f"unsupported index schema version {version!r}")
    try:
        levels = {
            level: tuple(
                SummaryNode(
                    id=n["id"],
                    level=n["level"],
                    range=parse_range(n["range"]),
                    text=n["text"],
                    children=tuple(n["children"]),
                )
                for n in doc["levels"][level]
            )
            for level in doc["depth"]
        }
        return HierIndex(
            view_id=doc["view_id"],
            levels=levels,
            build_errors=tuple(doc.get("build_errors", ())),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise IndexIoError(f"index file {path!r} is structurally broken: {exc}") from exc
