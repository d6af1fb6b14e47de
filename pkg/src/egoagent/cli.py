"""Command-line harness.

Subcommands cover the whole workflow: gen-corpus materializes a seeded
synthetic recording with certified questions, build-index compiles clip
logs into the summary tree, ask runs one question interactively, bench
scores a question file, rollout produces reward/advantage groups, and
export-sft converts stored trajectories into training conversations.

Settings resolve as flags > EGOAGENT_* environment variables > --config
JSON file > documented defaults.  Outputs are written atomically; a failed
command never leaves a partial file behind.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Callable, Mapping, Sequence

from .bench import run_bench
from .episode import EpisodeConfig, HttpPolicy, PolicyAdapter, ScriptedPolicy, run_episode
from .memory import ClipLog, build_hierarchy, ingest_clip_logs, load_index, save_index
from .qa import QARecord, load_qa, save_qa
from .rollout import (
    RewardWeights,
    export_rollouts,
    export_sft,
    load_trajectories,
    run_rollout_group,
    save_trajectories,
    trajectory_record,
)
from .synthetic import RandomAnswerPolicy, generate_synthetic_corpus, oracle_policy, random_spec
from .timebase import TimebaseError, parse_range, parse_timestamp
from .tools import Limits, http_backend_from_env, make_mock_dispatcher
from .trace import render_trajectory

DEFAULTS = {
    "max_steps": 10,
    "max_hits": 20,
    "payload_cap": 4000,
    "timeout_s": 10.0,
    "workers": 1,
    "group_size": 4,
}


class CliError(Exception):
    """User-facing failure: print the message, exit nonzero."""


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config file {path!r}: {exc}")
    if not isinstance(doc, dict):
        raise CliError(f"config file {path!r} must hold a JSON object")
    return doc


def resolve_setting(name: str, flag_value, config: Mapping, cast: Callable):
    """flags > environment > config file > default."""
    if flag_value is not None:
        return flag_value
    env = os.environ.get(f"EGOAGENT_{name.upper()}")
    if env is not None:
        return cast(env)
    if name in config:
        return cast(config[name])
    return DEFAULTS[name]


def _write_text_atomic(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_jsonl_atomic(path: str, docs: Sequence[dict]) -> None:
    _write_text_atomic(path, "".join(json.dumps(d, ensure_ascii=False, sort_keys=True) + "\n" for d in docs))


def load_clip_logs(path: str) -> list[ClipLog]:
    """Read line-delimited clip records: view_id, start, end, caption, asr."""
    clips = []
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    doc = json.loads(line)
                    clips.append(
                        ClipLog(
                            view_id=doc["view_id"],
                            range=parse_range(f"{doc['start']}-{doc['end']}"),
                            caption=doc.get("caption", ""),
                            asr=doc.get("asr", ""),
                        )
                    )
                except (KeyError, ValueError, TimebaseError) as exc:
                    raise CliError(f"{path}:{lineno}: bad clip record: {exc}")
    except OSError as exc:
        raise CliError(f"cannot read clip log file {path!r}: {exc}")
    return clips


def save_clip_logs(clips: Sequence[ClipLog], path: str) -> None:
    _write_jsonl_atomic(
        path,
        [
            {
                "view_id": c.view_id,
                "start": str(c.range.start),
                "end": str(c.range.end),
                "caption": c.caption,
                "asr": c.asr,
            }
            for c in clips
        ],
    )


def _build_runtime(args, config: Mapping):
    """Load clips, build or load the index, and wire up the toolbox."""
    clips = load_clip_logs(args.clips)
    store = ingest_clip_logs(clips)
    if getattr(args, "index", None):
        index = load_index(args.index)
    else:
        index = build_hierarchy(store)
    limits = Limits(
        timeout_s=resolve_setting("timeout_s", getattr(args, "timeout_s", None), config, float),
        max_payload=resolve_setting("payload_cap", getattr(args, "payload_cap", None), config, int),
    )
    max_hits = resolve_setting("max_hits", getattr(args, "max_hits", None), config, int)
    dispatcher = make_mock_dispatcher(index, store, limits=limits, max_hits=max_hits)
    for tool in ("rag", "video_llm", "vlm"):
        remote = http_backend_from_env(tool, store.view_id, os.environ)
        if remote is not None:
            dispatcher.register(remote)
    return store, index, dispatcher


def _policy_factory(choice: str, store, cfg: EpisodeConfig):
    """Map a --policy flag value to a per-question policy factory."""
    if choice == "oracle":
        return lambda qa: oracle_policy(qa, store.bounds.start)
    if choice.startswith("random"):
        _, _, seed_text = choice.partition(":")
        seed = int(seed_text) if seed_text else 0
        policies: dict[str, RandomAnswerPolicy] = {}

        def factory(qa: QARecord) -> PolicyAdapter:
            # one shared stream so results are reproducible run to run
            key = "shared"
            if key not in policies:
                policies[key] = RandomAnswerPolicy.seeded(list(qa.options), seed)
            return policies[key]

        return factory
    if choice.startswith("scripts:"):
        path = choice[len("scripts:"):]
        scripts: dict[str, list[str]] = {}
        try:
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        doc = json.loads(line)
                        scripts[str(doc["id"])] = list(doc["steps"])
        except (OSError, ValueError, KeyError) as exc:
            raise CliError(f"cannot read scripts file {path!r}: {exc}")

        def scripted(qa: QARecord) -> PolicyAdapter:
            if qa.id not in scripts:
                raise CliError(f"scripts file has no entry for question {qa.id!r}")
            return ScriptedPolicy(steps=scripts[qa.id])

        return scripted
    if choice.startswith("http:") or choice.startswith("https:"):
        return lambda qa: HttpPolicy(url=choice, api_key=os.environ.get("EGOAGENT_POLICY_API_KEY"))
    raise CliError(f"unknown policy {choice!r}; use oracle, random[:seed], scripts:<path>, or an http(s) URL")


def cmd_gen_corpus(args, config) -> int:
    spec = random_spec(
        seed=args.seed,
        days=args.days,
        clips_per_day=args.clips_per_day,
        n_events=args.events,
        distractor_density=args.distractor_density,
        view_id=args.view,
    )
    clips, qas = generate_synthetic_corpus(spec)
    save_clip_logs(clips, args.out_clips)
    save_qa(qas, args.out_qa)
    print(f"wrote {len(clips)} clips to {args.out_clips} and {len(qas)} questions to {args.out_qa}")
    return 0


def cmd_build_index(args, config) -> int:
    store = ingest_clip_logs(load_clip_logs(args.clips))
    index = build_hierarchy(store)
    save_index(index, args.out)
    counts = ", ".join(f"{level}={len(nodes)}" for level, nodes in index.levels.items())
    print(f"wrote index for view {index.view_id} to {args.out} ({counts})")
    return 0


def _episode_config(args, config) -> EpisodeConfig:
    return EpisodeConfig(
        max_steps=resolve_setting("max_steps", args.max_steps, config, int),
        mode=args.mode,
        identity=getattr(args, "identity", "") or "",
        enforce_causality=not getattr(args, "no_causality", False),
    )


def cmd_ask(args, config) -> int:
    store, _, dispatcher = _build_runtime(args, config)
    cfg = _episode_config(args, config)
    options = {}
    for item in args.option:
        label, _, text = item.partition("=")
        if not label or not text:
            raise CliError(f"--option must look like LABEL=text, got {item!r}")
        options[label] = text
    if len(options) < 2:
        raise CliError("ask needs at least two --option entries")
    query_time = parse_timestamp(args.query_time)
    if args.policy.startswith("script:"):
        policy: PolicyAdapter = ScriptedPolicy.from_file(args.policy[len("script:"):])
    else:
        qa = QARecord(
            id="adhoc", view_id=store.view_id, question=args.question,
            options=options, gold=next(iter(options)), query_time=query_time,
        )
        policy = _policy_factory(args.policy, store, cfg)(qa)
    cfg = EpisodeConfig(
        max_steps=cfg.max_steps, mode=cfg.mode,
        identity=args.identity or store.view_id, enforce_causality=cfg.enforce_causality,
    )
    traj = run_episode(args.question, options, query_time, policy, dispatcher, cfg)
    print(render_trajectory(traj))
    print(f"\nanswer: {traj.answer.choice if traj.answer else '(none)'} | steps: {len(traj.steps)}")
    return 0


def cmd_bench(args, config) -> int:
    store, _, dispatcher = _build_runtime(args, config)
    qas = load_qa(args.qa)
    cfg = _episode_config(args, config)
    factory = _policy_factory(args.policy, store, cfg)
    workers = resolve_setting("workers", args.workers, config, int)
    report, trajectories = run_bench(qas, factory, dispatcher, cfg, workers=workers)
    print(report.table())
    if args.out:
        _write_text_atomic(args.out, json.dumps(report.to_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n")
    if args.save_trajectories:
        records = [
            trajectory_record(t, question_id=qa.id, gold=qa.gold)
            for qa, t in zip(qas, trajectories)
        ]
        save_trajectories(records, args.save_trajectories)
    return 0


def cmd_rollout(args, config) -> int:
    store, _, dispatcher = _build_runtime(args, config)
    qas = load_qa(args.qa)
    cfg = _episode_config(args, config)
    factory = _policy_factory(args.policy, store, cfg)
    group_size = resolve_setting("group_size", args.group_size, config, int)
    weights = RewardWeights(w_answer=args.w_answer, w_format=args.w_format)
    groups = [
        run_rollout_group(qa, [factory(qa) for _ in range(group_size)], dispatcher, group_size, cfg, weights)
        for qa in qas
    ]
    count = export_rollouts(groups, args.out)
    mean_reward = sum(sum(g.rewards) for g in groups) / max(count, 1)
    print(f"wrote {count} rollout records ({len(groups)} groups of {group_size}) to {args.out}; "
          f"mean reward {mean_reward:.4f}")
    return 0


def cmd_export_sft(args, config) -> int:
    trajectories = load_trajectories(args.trajectories)
    count = export_sft(trajectories, args.out)
    print(f"wrote {count} conversations to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="egoagent",
        description="Tool-orchestrated reasoning over week-long timestamped egocentric video logs.",
    )
    parser.add_argument("--config", help="JSON config file (lowest precedence after flags and env)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a seeded synthetic corpus with certified questions")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--days", type=int, default=2)
    p.add_argument("--clips-per-day", type=int, default=2880)
    p.add_argument("--events", type=int, default=10)
    p.add_argument("--distractor-density", type=float, default=0.02)
    p.add_argument("--view", default="A1")
    p.add_argument("--out-clips", required=True)
    p.add_argument("--out-qa", required=True)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("build-index", help="compile clip logs into a summary index file")
    p.add_argument("--clips", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_index)

    def episode_flags(p):
        p.add_argument("--clips", required=True)
        p.add_argument("--index", help="prebuilt index file (rebuilt from clips when omitted)")
        p.add_argument("--mode", choices=["train_format", "datagen_format"], default="train_format")
        p.add_argument("--max-steps", type=int, default=None)
        p.add_argument("--max-hits", type=int, default=None)
        p.add_argument("--payload-cap", type=int, default=None, dest="payload_cap")
        p.add_argument("--timeout-s", type=float, default=None, dest="timeout_s")
        p.add_argument("--no-causality", action="store_true", help="allow tool windows past the query time")

    p = sub.add_parser("ask", help="run a single question and print the trajectory")
    episode_flags(p)
    p.add_argument("--question", required=True)
    p.add_argument("--option", action="append", default=[], help="repeatable LABEL=text")
    p.add_argument("--query-time", required=True)
    p.add_argument("--policy", default="oracle", help="oracle | random[:seed] | script:<file> | http(s) URL")
    p.add_argument("--identity", default="")
    p.set_defaults(func=cmd_ask)

    p = sub.add_parser("bench", help="score a question file")
    episode_flags(p)
    p.add_argument("--qa", required=True)
    p.add_argument("--policy", default="oracle", help="oracle | random[:seed] | scripts:<file> | http(s) URL")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--save-trajectories", help="write per-question trajectory records here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("rollout", help="produce grouped reward/advantage records")
    episode_flags(p)
    p.add_argument("--qa", required=True)
    p.add_argument("--policy", default="oracle")
    p.add_argument("--group-size", type=int, default=None)
    p.add_argument("--w-answer", type=float, default=1.0)
    p.add_argument("--w-format", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("export-sft", help="convert stored trajectories to training conversations")
    p.add_argument("--trajectories", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_sft)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        return args.func(args, config)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TimebaseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
