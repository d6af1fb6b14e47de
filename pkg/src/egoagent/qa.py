"""Multiple-choice question records and their line-delimited file format."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Iterable, Mapping

from .timebase import Timestamp, format_timestamp, parse_timestamp


@dataclass(frozen=True)
class QARecord:
    id: str
    view_id: str
    question: str
    options: Mapping[str, str]
    gold: str
    query_time: Timestamp

    def __post_init__(self) -> None:
        object.__setattr__(self, "options", dict(self.options))
        if len(self.options) < 2:
            raise ValueError(f"question {self.id!r} needs at least 2 options")
        if self.gold not in self.options:
            raise ValueError(f"gold label {self.gold!r} is not an option of question {self.id!r}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "view_id": self.view_id,
            "question": self.question,
            "options": dict(self.options),
            "gold": self.gold,
            "query_time": format_timestamp(self.query_time),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "QARecord":
        return cls(
            id=str(doc["id"]),
            view_id=doc["view_id"],
            question=doc["question"],
            options=doc["options"],
            gold=doc["gold"],
            query_time=parse_timestamp(doc["query_time"]),
        )


def save_qa(records: Iterable[QARecord], path: str | os.PathLike) -> int:
    lines = [json.dumps(r.to_dict(), ensure_ascii=False, sort_keys=True) for r in records]
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")
    return len(lines)


def load_qa(path: str | os.PathLike) -> list[QARecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(QARecord.from_dict(json.loads(line)))
    return records
