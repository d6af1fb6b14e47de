"""Deterministic synthetic corpora with certified gold answers.

The generator plants one made-up token into exactly one clip caption per
event, then asks which token was observed; the uniqueness of the planted
token is what certifies the gold label by construction.  Everything is a
pure function of the seed, so two runs of the same spec are byte-identical.

This module also supplies the reference policies the harness benchmarks
against: a two-step oracle script per question (search for the token, then
answer), and a uniform random guesser.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .episode import ScriptedPolicy
from .memory import ClipLog
from .qa import QARecord
from .timebase import (
    FPS,
    FRAMES_PER_DAY,
    TimeRange,
    Timestamp,
    advance,
    format_timestamp,
)

_VOCAB = (
    "kitchen", "coffee", "laptop", "notebook", "window", "table", "phone",
    "conversation", "walking", "cooking", "reading", "music", "garden",
    "meeting", "whiteboard", "bicycle", "groceries", "cleaning", "breakfast",
    "lunch", "dinner", "television", "keyboard", "bookshelf", "hallway",
    "stairs", "doorway", "jacket", "backpack", "umbrella", "camera", "plants",
)

_ASR_SNIPPETS = (
    "let's get started", "sounds good to me", "where did I put it",
    "can you pass that over", "almost done here", "what time is it",
    "I think it's upstairs", "that looks great", "maybe later",
    "did you see that", "hold on a second", "we should head out",
)

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"

CLIP_FRAMES = 30 * FPS


class SpecError(ValueError):
    """Synthetic corpus specification is unsatisfiable."""


@dataclass(frozen=True)
class PlantedEvent:
    time: Timestamp
    token: str
    distractor_density: float = 0.0


@dataclass(frozen=True)
class SyntheticSpec:
    seed: int
    days: int
    clips_per_day: int
    events: tuple[PlantedEvent, ...] = ()
    view_id: str = "A1"
    n_options: int = 4

    def __post_init__(self) -> None:
        if self.days < 1 or self.clips_per_day < 1:
            raise SpecError("days and clips_per_day must be positive")
        if self.clips_per_day * CLIP_FRAMES > FRAMES_PER_DAY:
            raise SpecError(f"clips_per_day cannot exceed {FRAMES_PER_DAY // CLIP_FRAMES}")
        if self.n_options < 2:
            raise SpecError("questions need at least 2 options")
        tokens = [e.token for e in self.events]
        if len(set(tokens)) != len(tokens):
            raise SpecError("planted tokens must be unique")


def _nonsense_word(rng: random.Random, length: int = 4) -> str:
    return "".join(rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(length))


def _unique_words(rng: random.Random, n: int, taken: set[str]) -> list[str]:
    words = []
    while len(words) < n:
        word = _nonsense_word(rng)
        if word not in taken:
            taken.add(word)
            words.append(word)
    return words


def random_spec(
    seed: int,
    days: int,
    clips_per_day: int,
    n_events: int,
    distractor_density: float = 0.02,
    view_id: str = "A1",
    n_options: int = 4,
) -> SyntheticSpec:
    """Draw event placements and tokens deterministically from the seed.

    Events land in distinct clips and avoid the final clips of the corpus so
    a later query time always exists.
    """
    rng = random.Random(seed)
    total = days * clips_per_day
    tail_margin = min(10, max(1, total // 10))
    plantable = total - tail_margin
    if n_events > plantable:
        raise SpecError(f"cannot plant {n_events} events in {plantable} usable clips")
    taken: set[str] = set(_VOCAB)
    tokens = _unique_words(rng, n_events, taken)
    slots = rng.sample(range(plantable), n_events)
    events = []
    for slot, token in zip(sorted(slots), tokens):
        day, idx = divmod(slot, clips_per_day)
        start_frames = day * FRAMES_PER_DAY + idx * CLIP_FRAMES
        offset = rng.randrange(CLIP_FRAMES)
        events.append(
            PlantedEvent(
                time=Timestamp.from_total_frames(start_frames + offset),
                token=token,
                distractor_density=distractor_density,
            )
        )
    return SyntheticSpec(
        seed=seed,
        days=days,
        clips_per_day=clips_per_day,
        events=tuple(events),
        view_id=view_id,
        n_options=n_options,
    )


def generate_synthetic_corpus(spec: SyntheticSpec) -> tuple[list[ClipLog], list[QARecord]]:
    """Materialize clip logs and one certified question per planted event."""
    rng = random.Random(spec.seed)
    event_by_clip: dict[int, PlantedEvent] = {}
    for event in spec.events:
        frames = event.time.total_frames
        day_index, within = divmod(frames, FRAMES_PER_DAY)
        clip_index = within // CLIP_FRAMES
        if clip_index >= spec.clips_per_day or day_index >= spec.days:
            raise SpecError(f"event at {format_timestamp(event.time)} falls outside the recording")
        key = day_index * spec.clips_per_day + clip_index
        if key in event_by_clip:
            raise SpecError("two events landed in the same clip")
        event_by_clip[key] = event

    taken = set(_VOCAB) | {e.token for e in spec.events}
    mean_density = (
        sum(e.distractor_density for e in spec.events) / len(spec.events) if spec.events else 0.0
    )
    decoy_pool = _unique_words(rng, max(spec.n_options * max(len(spec.events), 1), 8), taken)

    clips: list[ClipLog] = []
    for day in range(spec.days):
        for idx in range(spec.clips_per_day):
            start = Timestamp.from_total_frames(day * FRAMES_PER_DAY + idx * CLIP_FRAMES)
            end = advance(start, CLIP_FRAMES)
            words = rng.sample(_VOCAB, 6)
            key = day * spec.clips_per_day + idx
            if key in event_by_clip:
                words.append(event_by_clip[key].token)
            elif mean_density > 0 and rng.random() < mean_density:
                words.append(rng.choice(decoy_pool))
            clips.append(
                ClipLog(
                    view_id=spec.view_id,
                    range=TimeRange(start, end),
                    caption=" ".join(words),
                    asr=rng.choice(_ASR_SNIPPETS),
                )
            )

    corpus_end = clips[-1].range.end
    labels = [chr(ord("A") + i) for i in range(spec.n_options)]
    qas: list[QARecord] = []
    for n, event in enumerate(spec.events):
        frames = event.time.total_frames
        clip_end = (frames // CLIP_FRAMES + 1) * CLIP_FRAMES
        slack = corpus_end.total_frames - clip_end
        if slack <= 0:
            raise SpecError(f"event at {format_timestamp(event.time)} leaves no room for a query time")
        query_time = Timestamp.from_total_frames(clip_end + rng.randint(1, slack))

        other_tokens = [e.token for e in spec.events if e.token != event.token]
        rng.shuffle(other_tokens)
        distractors = (other_tokens + decoy_pool)[: spec.n_options - 1]
        texts = [event.token] + distractors
        rng.shuffle(texts)
        options = dict(zip(labels, texts))
        gold = next(label for label, text in options.items() if text == event.token)
        qas.append(
            QARecord(
                id=f"q{n:04d}",
                view_id=spec.view_id,
                question=f"Which unusual object keyword was logged around {format_timestamp(event.time)}?",
                options=options,
                gold=gold,
                query_time=query_time,
            )
        )
    return clips, qas


def oracle_script(qa: QARecord, corpus_start: Timestamp) -> list[str]:
    """Two turns that provably solve a planted-event question: search for the
    gold token across the whole accessible window, then answer."""
    token = qa.options[qa.gold]
    call = {
        "name": "rag",
        "arguments": {
            "level": "day",
            "keywords": [token],
            "start_time": format_timestamp(corpus_start),
            "query_time": format_timestamp(qa.query_time),
        },
    }
    return [
        f"<think>The question names a specific logged keyword; search the memory bank for it.</think>"
        f"<tool>{json.dumps(call, ensure_ascii=False)}</tool>",
        f"<think>The retrieved log confirms the keyword, so the matching option is {qa.gold}.</think>"
        f"<answer>{qa.gold}</answer>",
    ]


def oracle_policy(qa: QARecord, corpus_start: Timestamp) -> ScriptedPolicy:
    return ScriptedPolicy(steps=oracle_script(qa, corpus_start))


@dataclass
class RandomAnswerPolicy:
    """Answers immediately with a uniformly random option label."""

    labels: Sequence[str]
    rng: random.Random = field(default_factory=random.Random)

    @classmethod
    def seeded(cls, labels: Sequence[str], seed: int) -> "RandomAnswerPolicy":
        return cls(labels=list(labels), rng=random.Random(seed))

    def generate(self, messages: Sequence[Mapping[str, str]]) -> str:
        label = self.rng.choice(list(self.labels))
        return f"<think>No evidence gathered; guessing.</think><answer>{label}</answer>"
