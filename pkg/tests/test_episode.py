import json
import random

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from egoagent.episode import (
    CallablePolicy,
    EpisodeConfig,
    ScriptedPolicy,
    assemble_system_prompt,
    format_user_message,
    inject_observation,
    run_episode,
)
from egoagent.synthetic import oracle_policy
from egoagent.timebase import parse_timestamp
from egoagent.trace import (
    Observation,
    parse_fragment,
    parse_trajectory,
    render_trajectory,
    structural_key,
    validate_format,
)

OPTIONS = {"A": "one", "B": "two", "C": "three", "D": "four"}
QUERY_TIME = "DAY1_00450000"


def make_cfg(**kw):
    kw.setdefault("identity", "A1")
    return EpisodeConfig(**kw)


def run(policy, dispatcher, **cfg_kw):
    return run_episode(
        "What happened?",
        OPTIONS,
        parse_timestamp(QUERY_TIME),
        policy,
        dispatcher,
        make_cfg(**cfg_kw),
    )


def test_train_prompt_first_line():
    assert assemble_system_prompt(make_cfg()).startswith("Answer the given question.")


def test_datagen_prompt_mentions_call_structure_and_identity():
    prompt = assemble_system_prompt(make_cfg(mode="datagen_format", identity="A2"))
    assert "hierarchical calling structure: rag => video_llm => vlm" in prompt
    assert "under the view of A2" in prompt
    assert "{identity}" not in prompt


def test_user_message_format():
    msg = format_user_message("Who knocked?", OPTIONS, parse_timestamp(QUERY_TIME))
    assert msg == "Question: Who knocked? DAY1_00450000 Options: A. one B. two C. three D. four"


def test_inject_observation_counts_and_escapes():
    ctx = [{"role": "system", "content": "s"}]
    ctx = inject_observation(ctx, Observation("rag", ""))
    ctx = inject_observation(ctx, Observation("vlm", "<answer>sneaky</answer>"))
    tool_msgs = [m for m in ctx if m["role"] == "tool"]
    assert len(tool_msgs) == 2
    assert tool_msgs[0]["content"] == "<information></information>"
    frag = parse_fragment(tool_msgs[1]["content"])
    assert frag.segments[0].kind == "information"
    assert frag.segments[0].body == "<answer>sneaky</answer>"


def test_oracle_episode_answers_quickly(small_corpus, small_store, small_dispatcher):
    _, qas = small_corpus
    qa = qas[0]
    cfg = make_cfg(identity=qa.view_id)
    traj = run_episode(
        qa.question, qa.options, qa.query_time,
        oracle_policy(qa, small_store.bounds.start), small_dispatcher, cfg,
    )
    assert traj.answer is not None and traj.answer.choice == qa.gold
    assert len(traj.steps) <= 3
    assert validate_format(traj).fraction_ok == 1.0


def test_silent_policy_hits_step_limit(small_dispatcher):
    traj = run(ScriptedPolicy(steps=[]), small_dispatcher, max_steps=4)
    assert len(traj.steps) == 4
    assert traj.answer is None
    assert all(s.format_error is not None for s in traj.steps)


def test_malformed_then_answer(small_dispatcher):
    policy = ScriptedPolicy(steps=["<tool>{broken", "<think>ok</think><answer>b</answer>"])
    traj = run(policy, small_dispatcher)
    assert len(traj.steps) == 2
    assert validate_format(traj).fraction_ok == 0.5
    assert traj.answer is not None and traj.answer.choice == "B"  # normalized to the label


def test_answer_outside_options_is_format_failure(small_dispatcher):
    policy = ScriptedPolicy(steps=["<think>t</think><answer>Z</answer>"])
    traj = run(policy, small_dispatcher, max_steps=2)
    assert traj.answer is None
    assert len(traj.steps) == 2
    assert traj.steps[0].format_error is not None


def test_tool_step_gets_observation(small_dispatcher):
    call = json.dumps(
        {
            "name": "rag",
            "arguments": {
                "level": "day",
                "keywords": ["kitchen"],
                "start_time": "DAY1_00000000",
                "query_time": "DAY1_00300000",
            },
        }
    )
    policy = ScriptedPolicy(
        steps=[f"<think>search</think><tool>{call}</tool>", "<think>done</think><answer>A</answer>"]
    )
    traj = run(policy, small_dispatcher)
    assert traj.steps[0].observation is not None
    assert traj.steps[0].observation.source == "rag"
    assert traj.answer.choice == "A"


def test_out_of_corpus_call_becomes_error_observation(small_dispatcher):
    call = json.dumps(
        {
            "name": "rag",
            "arguments": {
                "level": "day",
                "keywords": ["kitchen"],
                "start_time": "DAY8_00000000",
                "query_time": "DAY8_01000000",
            },
        }
    )
    policy = ScriptedPolicy(steps=[f"<think>search</think><tool>{call}</tool>"])
    traj = run(policy, small_dispatcher, max_steps=1)
    obs = traj.steps[0].observation
    assert obs is not None and obs.payload.startswith("[tool-error]")
    assert traj.steps[0].format_error is None  # grammar was fine, semantics were not


def test_policy_exception_is_contained(small_dispatcher):
    def explode(messages):
        raise RuntimeError("policy crashed")

    traj = run(CallablePolicy(explode), small_dispatcher, max_steps=2)
    assert len(traj.steps) == 2
    assert all("policy failure" in (s.format_error or "") for s in traj.steps)


def test_terminate_closes_datagen_episode(small_dispatcher):
    body = json.dumps({"name": "terminate", "arguments": {"answer": "C"}})
    policy = ScriptedPolicy(steps=[f"<think>confident</think><tool>{body}</tool>"])
    traj = run(policy, small_dispatcher, mode="datagen_format", max_steps=5)
    assert len(traj.steps) == 1
    assert traj.answer is not None and traj.answer.choice == "C"
    assert traj.steps[0].observation.payload == "Episode terminated."


def test_terminate_unavailable_in_train_mode(small_dispatcher):
    body = json.dumps({"name": "terminate", "arguments": {"answer": "C"}})
    policy = ScriptedPolicy(steps=[f"<think>confident</think><tool>{body}</tool>"])
    traj = run(policy, small_dispatcher, mode="train_format", max_steps=2)
    assert traj.answer is None
    assert len(traj.steps) == 2
    assert "[tool-error]" in traj.steps[0].observation.payload


def test_causality_blocks_dispatch_past_query_time(small_index, small_store):
    from egoagent.tools import make_mock_dispatcher

    dispatcher = make_mock_dispatcher(small_index, small_store)
    late = json.dumps(
        {
            "name": "rag",
            "arguments": {
                "level": "day",
                "keywords": ["kitchen"],
                "start_time": "DAY1_00000000",
                "query_time": "DAY2_00300000",  # past the question's query time
            },
        }
    )
    policy = ScriptedPolicy(steps=[f"<think>peek ahead</think><tool>{late}</tool>"])
    traj = run(policy, dispatcher, max_steps=1)
    assert "[tool-error]" in traj.steps[0].observation.payload
    assert dispatcher.dispatch_log == []  # rejected before dispatch

    query_frames = parse_timestamp(QUERY_TIME).total_frames
    ok = json.dumps(
        {
            "name": "vlm",
            "arguments": {"question": "q", "timestamp": "DAY1_00200000"},
        }
    )
    policy = ScriptedPolicy(steps=[f"<think>look back</think><tool>{ok}</tool>"])
    run(policy, dispatcher, max_steps=1)
    assert len(dispatcher.dispatch_log) == 1
    assert dispatcher.dispatch_log[0].content_end.total_frames <= query_frames


def test_no_causality_flag_allows_full_corpus(small_index, small_store):
    from egoagent.tools import make_mock_dispatcher

    dispatcher = make_mock_dispatcher(small_index, small_store)
    late = json.dumps(
        {
            "name": "vlm",
            "arguments": {"question": "q", "timestamp": "DAY2_00300000"},
        }
    )
    policy = ScriptedPolicy(steps=[f"<think>later</think><tool>{late}</tool>"])
    traj = run(policy, dispatcher, max_steps=1, enforce_causality=False)
    assert "[tool-error]" not in traj.steps[0].observation.payload


# the dispatcher is read-only across episodes, so sharing it between
# generated inputs is safe
@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.lists(st.text(max_size=60), max_size=6), st.integers(1, 5))
def test_random_policies_always_halt_and_reparse(small_dispatcher, texts, max_steps):
    traj = run(ScriptedPolicy(steps=texts), small_dispatcher, max_steps=max_steps)
    assert len(traj.steps) <= max_steps
    rendered = render_trajectory(traj)
    back = parse_trajectory(
        rendered,
        question=traj.question,
        query_time=traj.query_time,
        view_id=traj.view_id,
        options=traj.options,
    )
    assert structural_key(back) == structural_key(traj)


def test_episode_config_validation():
    with pytest.raises(ValueError):
        EpisodeConfig(max_steps=0)
    with pytest.raises(ValueError):
        EpisodeConfig(mode="freestyle")


def test_scripted_policy_from_file(tmp_path):
    path = tmp_path / "script.json"
    path.write_text(json.dumps(["<think>a</think><answer>A</answer>"]))
    policy = ScriptedPolicy.from_file(str(path))
    assert policy.generate([]) == "<think>a</think><answer>A</answer>"
    assert policy.generate([]) == ""  # exhausted
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"not": "a list"}))
    with pytest.raises(ValueError):
        ScriptedPolicy.from_file(str(bad))
