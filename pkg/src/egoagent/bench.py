"""Question-set evaluation: accuracy, format accuracy, and step counts."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from statistics import fmean
from typing import Callable, Sequence

from .episode import EpisodeConfig, PolicyAdapter, run_episode
from .qa import QARecord
from .rollout import RewardWeights, score_trajectory
from .tools import Dispatcher
from .trace import Trajectory

PolicyFactory = Callable[[QARecord], PolicyAdapter]


@dataclass(frozen=True)
class BenchRow:
    id: str
    gold: str
    answer: str | None
    correct: bool
    format_fraction: float
    format_ok: bool
    steps: int


@dataclass(frozen=True)
class BenchReport:
    n_questions: int
    accuracy: float
    format_accuracy: float
    mean_steps: float
    rows: tuple[BenchRow, ...]

    def to_dict(self) -> dict:
        return {
            "n_questions": self.n_questions,
            "accuracy": self.accuracy,
            "format_accuracy": self.format_accuracy,
            "mean_steps": self.mean_steps,
            "rows": [vars(row) for row in self.rows],
        }

    def table(self) -> str:
        lines = [
            f"{'id':<10} {'gold':<5} {'answer':<7} {'ok':<3} {'fmt':<5} steps",
            "-" * 42,
        ]
        for row in self.rows:
            lines.append(
                f"{row.id:<10} {row.gold:<5} {row.answer or '-':<7} "
                f"{'y' if row.correct else 'n':<3} {row.format_fraction:<5.2f} {row.steps}"
            )
        lines.append("-" * 42)
        lines.append(
            f"questions={self.n_questions} accuracy={self.accuracy:.4f} "
            f"format_accuracy={self.format_accuracy:.4f} mean_steps={self.mean_steps:.2f}"
        )
        return "\n".join(lines)


def run_bench(
    qas: Sequence[QARecord],
    policy_factory: PolicyFactory,
    dispatcher: Dispatcher,
    cfg: EpisodeConfig,
    *,
    weights: RewardWeights = RewardWeights(),
    workers: int = 1,
) -> tuple[BenchReport, list[Trajectory]]:
    """Run every question once and tally the results.

    The dispatcher and its mock backends are read-only, so questions can be
    fanned out across threads; results come back in input order either way.
    """
    def one(qa: QARecord) -> tuple[BenchRow, Trajectory]:
        member_cfg = EpisodeConfig(
            max_steps=cfg.max_steps,
            mode=cfg.mode,
            identity=qa.view_id or cfg.identity,
            enforce_causality=cfg.enforce_causality,
        )
        traj = run_episode(qa.question, qa.options, qa.query_time, policy_factory(qa), dispatcher, member_cfg)
        report = score_trajectory(traj, qa.gold, weights)
        row = BenchRow(
            id=qa.id,
            gold=qa.gold,
            answer=traj.answer.choice if traj.answer else None,
            correct=bool(report.answer_correct),
            format_fraction=report.format_fraction,
            format_ok=report.format_fraction == 1.0,
            steps=len(traj.steps),
        )
        return row, traj

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, qas))
    else:
        results = [one(qa) for qa in qas]

    rows = tuple(r for r, _ in results)
    trajectories = [t for _, t in results]
    n = len(rows)
    report = BenchReport(
        n_questions=n,
        accuracy=fmean(row.correct for row in rows) if n else 0.0,
        format_accuracy=fmean(row.format_ok for row in rows) if n else 0.0,
        mean_steps=fmean(row.steps for row in rows) if n else 0.0,
        rows=rows,
    )
    return report, trajectories
