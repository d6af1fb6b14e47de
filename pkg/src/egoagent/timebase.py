"""Frame-accurate clock for multi-day egocentric recordings.

An instant is written ``DAYX_HHMMSSFF``: a 1-based recording day (unpadded,
1-99), wall-clock hour/minute/second, and a frame counter at 20 frames per
second.  An interval is two instants joined by ``-`` and is half-open: the
end instant is the first frame *not* covered, so contiguous intervals share
a boundary without overlapping.

There is no calendar here.  Days are a flat counter, so ordering reduces to
a single integer (``total_frames``) and canonical strings of equal day width
sort chronologically.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

FPS = 20
FRAMES_PER_MINUTE = 60 * FPS
FRAMES_PER_HOUR = 3600 * FPS
FRAMES_PER_DAY = 86400 * FPS

MAX_DAY = 99

# Video windows must be strictly longer than 1 second and strictly shorter
# than 10 minutes.
MIN_VIDEO_FRAMES = 1 * FPS
MAX_VIDEO_FRAMES = 600 * FPS

# Unpadded day (no leading zero), then exactly eight digits: HHMMSSFF.
_TIMESTAMP_RE = re.compile(r"^DAY([1-9][0-9]?)_(\d{2})(\d{2})(\d{2})(\d{2})$")


class TimebaseError(ValueError):
    """Base class for timestamp and range failures."""


class TimestampSyntaxError(TimebaseError):
    """Input does not have the DAYX_HHMMSSFF shape."""


class TimestampRangeError(TimebaseError):
    """A timestamp field is outside its legal bounds (e.g. frame 20)."""


class RangeOrderError(TimebaseError):
    """Range end is not strictly after its start."""


class RangeTooShort(TimebaseError):
    """Video range does not exceed 1 second."""


class RangeTooLong(TimebaseError):
    """Video range is not under 10 minutes."""


@dataclass(frozen=True, order=True)
class Timestamp:
    """One frame-accurate instant.  Field order makes tuple comparison
    chronological."""

    day: int
    hour: int
    minute: int
    second: int
    frame: int = 0

    def __post_init__(self) -> None:
        if not 1 <= self.day <= MAX_DAY:
            raise TimestampRangeError(f"day must be 1..{MAX_DAY}, got {self.day}")
        if not 0 <= self.hour <= 23:
            raise TimestampRangeError(f"hour must be 0..23, got {self.hour}")
        if not 0 <= self.minute <= 59:
            raise TimestampRangeError(f"minute must be 0..59, got {self.minute}")
        if not 0 <= self.second <= 59:
            raise TimestampRangeError(f"second must be 0..59, got {self.second}")
        if not 0 <= self.frame <= FPS - 1:
            raise TimestampRangeError(f"frame must be 0..{FPS - 1}, got {self.frame}")

    @property
    def total_frames(self) -> int:
        """Frames elapsed since DAY1_00000000; a bijection with the fields."""
        return (
            (self.day - 1) * FRAMES_PER_DAY
            + self.hour * FRAMES_PER_HOUR
            + self.minute * FRAMES_PER_MINUTE
            + self.second * FPS
            + self.frame
        )

    @classmethod
    def from_total_frames(cls, frames: int) -> "Timestamp":
        if frames < 0:
            raise TimestampRangeError(f"negative frame index {frames}")
        rest, frame = divmod(frames, FPS)
        rest, second = divmod(rest, 60)
        rest, minute = divmod(rest, 60)
        day_minus_one, hour = divmod(rest, 24)
        return cls(day_minus_one + 1, hour, minute, second, frame)

    def __str__(self) -> str:
        return format_timestamp(self)


@dataclass(frozen=True)
class Duration:
    """A non-negative count of 1/20-second ticks."""

    frames: int

    def __post_init__(self) -> None:
        if self.frames < 0:
            raise TimestampRangeError(f"duration must be non-negative, got {self.frames}")

    @classmethod
    def from_seconds(cls, seconds: float) -> "Duration":
        return cls(round(seconds * FPS))

    @property
    def seconds(self) -> float:
        return self.frames / FPS

    def __add__(self, other: "Duration") -> "Duration":
        return Duration(self.frames + other.frames)


@dataclass(frozen=True)
class TimeRange:
    """Half-open interval [start, end); end is strictly after start."""

    start: Timestamp
    end: Timestamp

    def __post_init__(self) -> None:
        if self.end.total_frames <= self.start.total_frames:
            raise RangeOrderError(f"range end {self.end} must be strictly after start {self.start}")

    @property
    def duration(self) -> Duration:
        return Duration(self.end.total_frames - self.start.total_frames)

    def contains(self, t: Timestamp) -> bool:
        return self.start <= t < self.end

    def intersects(self, other: "TimeRange") -> bool:
        return self.start < other.end and other.start < self.end

    def __str__(self) -> str:
        return format_range(self)


def parse_timestamp(text: str) -> Timestamp:
    """Parse a canonical DAYX_HHMMSSFF string.

    Raises TimestampSyntaxError for shape violations (including padded or
    out-of-width day fields) and TimestampRangeError for out-of-bounds
    field values such as frame 20.
    """
    if not isinstance(text, str):
        raise TimestampSyntaxError(f"timestamp must be a string, got {type(text).__name__}")
    m = _TIMESTAMP_RE.match(text)
    if m is None:
        raise TimestampSyntaxError(f"not a DAYX_HHMMSSFF timestamp: {text!r}")
    day, hour, minute, second, frame = (int(g) for g in m.groups())
    return Timestamp(day, hour, minute, second, frame)


def format_timestamp(t: Timestamp) -> str:
    """Canonical form: unpadded day, zero-padded HHMMSSFF."""
    return f"DAY{t.day}_{t.hour:02d}{t.minute:02d}{t.second:02d}{t.frame:02d}"


def advance(t: Timestamp, d: Duration | int) -> Timestamp:
    """Move an instant forward, carrying frame -> second -> minute -> hour -> day."""
    frames = d.frames if isinstance(d, Duration) else int(d)
    if frames < 0:
        raise TimestampRangeError("advance takes a non-negative duration")
    return Timestamp.from_total_frames(t.total_frames + frames)


def parse_range(text: str) -> TimeRange:
    """Parse 'DAYX_HHMMSSFF-DAYX_HHMMSSFF'; the end must be strictly later."""
    if not isinstance(text, str):
        raise TimestampSyntaxError(f"range must be a string, got {type(text).__name__}")
    parts = text.split("-")
    if len(parts) != 2:
        raise TimestampSyntaxError(f"range must be 'start-end' with one '-': {text!r}")
    start = parse_timestamp(parts[0])
    end = parse_timestamp(parts[1])
    if end.total_frames <= start.total_frames:
        raise RangeOrderError(f"range end {parts[1]} must be strictly after start {parts[0]}")
    return TimeRange(start, end)


def format_range(r: TimeRange) -> str:
    return f"{format_timestamp(r.start)}-{format_timestamp(r.end)}"


def validate_video_range(r: TimeRange) -> None:
    """Enforce the video window bounds: duration strictly between 1 s and 10 min."""
    frames = r.duration.frames
    if frames <= MIN_VIDEO_FRAMES:
        raise RangeTooShort(f"video range must be greater than 1 second, got {frames} frames")
    if frames >= MAX_VIDEO_FRAMES:
        raise RangeTooLong(f"video range must be smaller than 10 minutes, got {frames} frames")
