"""Scoring, group-standardized advantages, and training-data export.

Rewards are rule-based: a weighted sum of answer correctness and the
fraction of grammar-clean steps (the format weight defaults to zero, so
out of the box reward is pure correctness).  Advantages standardize the
rewards of a question's rollout group by subtracting the group mean and
dividing by the population standard deviation; a zero-dispersion group
(including a single rollout) maps to all-zero advantages.

What leaves this module is (trajectory, reward, advantage) tuples and
conversation-format training records.  Gradient math belongs to whatever
trainer consumes them.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from statistics import fmean, pstdev
from typing import Iterable, Sequence

from .episode import EpisodeConfig, PolicyAdapter, format_user_message, run_episode
from .prompts import TRAIN_PROMPT
from .qa import QARecord
from .timebase import parse_timestamp
from .tools import Dispatcher
from .trace import (
    Trajectory,
    from_conversation,
    parse_trajectory,
    render_trajectory,
    to_conversation,
    validate_format,
)


@dataclass(frozen=True)
class RewardWeights:
    w_answer: float = 1.0
    w_format: float = 0.0

    def __post_init__(self) -> None:
        if self.w_answer < 0 or self.w_format < 0:
            raise ValueError("reward weights must be non-negative")
        if self.w_answer == 0 and self.w_format == 0:
            raise ValueError("at least one reward weight must be positive")


@dataclass(frozen=True)
class RewardReport:
    answer_correct: int
    format_fraction: float
    reward: float


def score_trajectory(traj: Trajectory, gold_choice: str, weights: RewardWeights = RewardWeights()) -> RewardReport:
    """Rule-based reward: answer match (case-insensitive) plus format credit."""
    correct = int(traj.answer is not None and traj.answer.choice.strip().lower() == gold_choice.strip().lower())
    fraction = validate_format(traj).fraction_ok
    return RewardReport(
        answer_correct=correct,
        format_fraction=fraction,
        reward=weights.w_answer * correct + weights.w_format * fraction,
    )


def group_advantages(rewards: Sequence[float], epsilon: float = 1e-8) -> list[float]:
    """Standardize rewards within one rollout group.

    Population standard deviation.  epsilon is the zero-dispersion guard:
    any group whose dispersion does not exceed it (constant groups, single
    members, float-noise-only variation) maps to exact zeros, while
    non-degenerate groups keep exact unit-dispersion values.
    """
    if not rewards:
        return []
    std = pstdev(rewards)
    if std <= epsilon:
        return [0.0] * len(rewards)
    mean = fmean(rewards)
    return [(r - mean) / std for r in rewards]


@dataclass(frozen=True)
class RolloutGroup:
    question_id: str
    trajectories: tuple[Trajectory, ...]
    reports: tuple[RewardReport, ...]
    rewards: tuple[float, ...]
    advantages: tuple[float, ...]

    @property
    def size(self) -> int:
        return len(self.trajectories)


def run_rollout_group(
    qa: QARecord,
    policies: PolicyAdapter | Sequence[PolicyAdapter],
    dispatcher: Dispatcher,
    group_size: int,
    cfg: EpisodeConfig,
    weights: RewardWeights = RewardWeights(),
) -> RolloutGroup:
    """Run G independent episodes of one question and standardize their rewards.

    Pass one policy to share it across members (it must be stateless) or a
    sequence of exactly G policies for per-member scripts.  A member whose
    policy collapses entirely still contributes a reward-0 trajectory.
    """
    if group_size < 1:
        raise ValueError(f"group_size must be >= 1, got {group_size}")
    if isinstance(policies, (list, tuple)):
        if len(policies) != group_size:
            raise ValueError(f"got {len(policies)} policies for group size {group_size}")
        members = list(policies)
    else:
        members = [policies] * group_size

    member_cfg = EpisodeConfig(
        max_steps=cfg.max_steps,
        mode=cfg.mode,
        identity=qa.view_id or cfg.identity,
        enforce_causality=cfg.enforce_causality,
    )
    trajectories = [
        run_episode(qa.question, qa.options, qa.query_time, policy, dispatcher, member_cfg)
        for policy in members
    ]
    reports = [score_trajectory(t, qa.gold, weights) for t in trajectories]
    rewards = [r.reward for r in reports]
    return RolloutGroup(
        question_id=qa.id,
        trajectories=tuple(trajectories),
        reports=tuple(reports),
        rewards=tuple(rewards),
        advantages=tuple(group_advantages(rewards)),
    )


def _atomic_write_lines(path: str | os.PathLike, lines: Iterable[str]) -> int:
    tmp = f"{os.fspath(path)}.tmp"
    count = 0
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            for line in lines:
                fh.write(line + "\n")
                count += 1
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return count


def trajectory_record(traj: Trajectory, *, question_id: str = "", gold: str | None = None) -> dict:
    """The stored form of one trajectory: metadata plus the rendered text."""
    doc = {
        "id": question_id,
        "view_id": traj.view_id,
        "question": traj.question,
        "query_time": str(traj.query_time),
        "options": dict(traj.options or {}),
        "trajectory": render_trajectory(traj),
    }
    if gold is not None:
        doc["gold"] = gold
    return doc


def trajectory_from_record(doc: dict) -> Trajectory:
    return parse_trajectory(
        doc["trajectory"],
        question=doc["question"],
        query_time=parse_timestamp(doc["query_time"]),
        view_id=doc["view_id"],
        options=doc.get("options") or None,
    )


def save_trajectories(records: Iterable[dict], path: str | os.PathLike) -> int:
    return _atomic_write_lines(path, (json.dumps(r, ensure_ascii=False, sort_keys=True) for r in records))


def load_trajectories(path: str | os.PathLike) -> list[Trajectory]:
    with open(path, encoding="utf-8") as fh:
        return [trajectory_from_record(json.loads(line)) for line in fh if line.strip()]


def export_rollouts(groups: Iterable[RolloutGroup], path: str | os.PathLike) -> int:
    """Line-delimited rollout records: question id, group index, reward,
    advantage, and the canonical rendered trajectory."""
    def lines():
        for group in groups:
            for i, traj in enumerate(group.trajectories):
                doc = trajectory_record(traj, question_id=group.question_id)
                doc.update(
                    group_index=i,
                    reward=group.rewards[i],
                    advantage=group.advantages[i],
                    answer_correct=group.reports[i].answer_correct,
                    format_fraction=group.reports[i].format_fraction,
                )
                yield json.dumps(doc, ensure_ascii=False, sort_keys=True)

    return _atomic_write_lines(path, lines())


def sft_record(traj: Trajectory) -> dict:
    """One training conversation: system, user, then assistant/tool turns."""
    user = format_user_message(traj.question, traj.options or {}, traj.query_time)
    return {
        "view_id": traj.view_id,
        "question": traj.question,
        "query_time": str(traj.query_time),
        "options": dict(traj.options or {}),
        "messages": to_conversation(traj, TRAIN_PROMPT, user),
    }


def export_sft(trajectories: Iterable[Trajectory], path: str | os.PathLike) -> int:
    """Write one conversation per line; returns the number written."""
    return _atomic_write_lines(
        path, (json.dumps(sft_record(t), ensure_ascii=False, sort_keys=True) for t in trajectories)
    )


def import_sft(path: str | os.PathLike) -> list[Trajectory]:
    """Rebuild trajectories from an exported conversation file."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            out.append(
                from_conversation(
                    doc["messages"],
                    question=doc["question"],
                    query_time=parse_timestamp(doc["query_time"]),
                    view_id=doc["view_id"],
                    options=doc.get("options") or None,
                )
            )
    return out
