import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from egoagent.schemas import (
    ArgumentTypeError,
    ExtraArgumentError,
    MissingArgumentError,
    ToolCallValidationError,
    UnknownToolError,
)
from egoagent.timebase import RangeTooLong, Timestamp
from egoagent.trace import (
    FinalAnswer,
    JsonSyntaxError,
    NestedTagError,
    Observation,
    Segment,
    Step,
    Thought,
    ToolCall,
    TraceError,
    Trajectory,
    UnclosedTagError,
    UnknownTagError,
    escape_text,
    parse_fragment,
    parse_tool_call,
    parse_trajectory,
    render_step,
    render_trajectory,
    structural_key,
    unescape_text,
    validate_format,
)

RAG_BODY = json.dumps(
    {
        "name": "rag",
        "arguments": {
            "level": "day",
            "keywords": ["screwdriver", "applause"],
            "start_time": "DAY1_11210217",
            "query_time": "DAY1_11220217",
        },
    }
)


def test_parse_fragment_think_then_tool():
    frag = parse_fragment(f"<think>x</think><tool>{RAG_BODY}</tool>")
    assert [s.kind for s in frag.segments] == ["think", "tool"]
    assert frag.segments[0].body == "x"
    assert frag.stray == ()


def test_parse_fragment_answer():
    frag = parse_fragment("<answer>B</answer>")
    assert frag.segments == (Segment("answer", "B"),)


def test_parse_fragment_unclosed():
    with pytest.raises(UnclosedTagError):
        parse_fragment("<think>a")


def test_parse_fragment_nested():
    with pytest.raises(NestedTagError):
        parse_fragment("<think>a<tool>b</tool></think>")


def test_parse_fragment_mismatched_close():
    with pytest.raises(UnclosedTagError):
        parse_fragment("<think>a</tool>")


def test_parse_fragment_dangling_close():
    with pytest.raises(UnclosedTagError):
        parse_fragment("no opener </think>")


def test_parse_fragment_unknown_tag():
    with pytest.raises(UnknownTagError):
        parse_fragment("<thonk>a</thonk>")


def test_parse_fragment_reports_stray_text_with_positions():
    frag = parse_fragment("noise <think>a</think> trailing")
    assert [s.kind for s in frag.segments] == ["think"]
    assert [(s.position, s.text.strip()) for s in frag.stray] == [(0, "noise"), (22, "trailing")]


def test_parse_fragment_ignores_non_tag_angle_brackets():
    frag = parse_fragment("<think>i < 5 and j > 2</think>")
    assert frag.segments[0].body == "i < 5 and j > 2"


def test_escape_round_trip():
    hostile = "<think>&amp;</think><tool>x</tool>"
    assert unescape_text(escape_text(hostile)) == hostile
    frag = parse_fragment(f"<information>{escape_text(hostile)}</information>")
    assert frag.segments == (Segment("information", hostile),)


def test_parse_tool_call_schema_example():
    call = parse_tool_call(RAG_BODY)
    assert call.name == "rag"
    assert call.arguments["keywords"] == ["screwdriver", "applause"]
    assert list(call.arguments) == ["level", "keywords", "start_time", "query_time"]


def test_parse_tool_call_range_too_long():
    body = json.dumps(
        {"name": "video_llm", "arguments": {"question": "q", "range": "DAY1_11000000-DAY1_12000000"}}
    )
    with pytest.raises(ArgumentTypeError) as err:
        parse_tool_call(body)
    assert isinstance(err.value.__cause__, RangeTooLong)


def test_parse_tool_call_bad_level_enum():
    body = json.dumps(
        {
            "name": "rag",
            "arguments": {
                "level": "month",
                "keywords": ["x"],
                "start_time": "DAY1_11000000",
                "query_time": "DAY1_11010000",
            },
        }
    )
    with pytest.raises(ArgumentTypeError):
        parse_tool_call(body)


def _rag_args(**overrides):
    args = {
        "level": "day",
        "keywords": ["x"],
        "start_time": "DAY1_11000000",
        "query_time": "DAY1_11010000",
    }
    args.update(overrides)
    return {"name": "rag", "arguments": args}


VIOLATION_CORPUS = [
    # missing required keys, one per tool argument
    ({"name": "rag", "arguments": {"keywords": ["x"], "start_time": "DAY1_11000000", "query_time": "DAY1_11010000"}}, MissingArgumentError),
    ({"name": "rag", "arguments": {"level": "day", "start_time": "DAY1_11000000", "query_time": "DAY1_11010000"}}, MissingArgumentError),
    ({"name": "rag", "arguments": {"level": "day", "keywords": ["x"], "query_time": "DAY1_11010000"}}, MissingArgumentError),
    ({"name": "rag", "arguments": {"level": "day", "keywords": ["x"], "start_time": "DAY1_11000000"}}, MissingArgumentError),
    ({"name": "video_llm", "arguments": {"range": "DAY1_11000000-DAY1_11050000"}}, MissingArgumentError),
    ({"name": "video_llm", "arguments": {"question": "q"}}, MissingArgumentError),
    ({"name": "vlm", "arguments": {"timestamp": "DAY1_11000000"}}, MissingArgumentError),
    ({"name": "vlm", "arguments": {"question": "q"}}, MissingArgumentError),
    # enum violation
    (_rag_args(level="month"), ArgumentTypeError),
    # range violations: too long, too short, reversed
    ({"name": "video_llm", "arguments": {"question": "q", "range": "DAY1_11000000-DAY1_12000000"}}, ArgumentTypeError),
    ({"name": "video_llm", "arguments": {"question": "q", "range": "DAY1_11000000-DAY1_11000100"}}, ArgumentTypeError),
    ({"name": "video_llm", "arguments": {"question": "q", "range": "DAY1_11050000-DAY1_11000000"}}, ArgumentTypeError),
    # unknown tool, extra argument, wrong types, empty keywords, bad window
    ({"name": "oracle", "arguments": {}}, UnknownToolError),
    (_rag_args(extra="nope"), ExtraArgumentError),
    ({"name": "vlm", "arguments": {"question": 3, "timestamp": "DAY1_11000000"}}, ArgumentTypeError),
    (_rag_args(keywords="screwdriver"), ArgumentTypeError),
    (_rag_args(keywords=[]), ArgumentTypeError),
    (_rag_args(start_time="DAY1_11010000", query_time="DAY1_11000000"), ArgumentTypeError),
    (_rag_args(start_time="DAY1_11210220"), ArgumentTypeError),  # frame 20
]


@pytest.mark.parametrize("doc,expected", VIOLATION_CORPUS)
def test_violation_corpus_rejected_with_matching_class(doc, expected):
    with pytest.raises(expected):
        parse_tool_call(json.dumps(doc))


def test_parse_tool_call_json_garbage():
    with pytest.raises(JsonSyntaxError):
        parse_tool_call("{not json")
    with pytest.raises(JsonSyntaxError):
        parse_tool_call('["a", "list"]')
    with pytest.raises(JsonSyntaxError):
        parse_tool_call('{"name": "rag", "arguments": {}, "junk": 1}')


# --- generated round-trip trajectories -------------------------------------

_words = st.text(alphabet="abcdefghij <>&/", min_size=1, max_size=20).filter(lambda s: s.strip())
_ts_strings = st.builds(
    lambda d, h, m, s, f: f"DAY{d}_{h:02d}{m:02d}{s:02d}{f:02d}",
    st.integers(1, 3), st.integers(0, 23), st.integers(0, 59), st.integers(0, 59), st.integers(0, 19),
)


def _rag_call(keywords, start, end):
    lo, hi = sorted([start, end])
    if lo == hi:
        hi = lo[:-2] + ("01" if lo.endswith("00") else "00")
        lo, hi = sorted([lo, hi])
    return ToolCall("rag", {"level": "day", "keywords": list(keywords), "start_time": lo, "query_time": hi})


_tool_calls = st.one_of(
    st.builds(_rag_call, st.lists(_words, min_size=1, max_size=3), _ts_strings, _ts_strings),
    st.builds(
        lambda q, t: ToolCall("vlm", {"question": q, "timestamp": t}),
        _words, _ts_strings,
    ),
)

_tool_steps = st.builds(
    lambda th, call, payload: Step(
        thought=Thought(th), action=call, observation=Observation(call.name, payload)
    ),
    _words, _tool_calls, st.text(max_size=40),
)

_answer_steps = st.builds(
    lambda th, choice: Step(thought=Thought(th), action=FinalAnswer(choice), observation=None),
    _words, st.sampled_from(["A", "B", "C", "D"]),
)


@st.composite
def trajectories(draw):
    steps = draw(st.lists(_tool_steps, max_size=4))
    if draw(st.booleans()):
        steps.append(draw(_answer_steps))
    answer = steps[-1].action if steps and steps[-1].is_answer else None
    return Trajectory(
        question=draw(_words),
        query_time=Timestamp(2, 12, 0, 0),
        view_id="A1",
        steps=tuple(steps),
        answer=answer,
        options={"A": "1", "B": "2", "C": "3", "D": "4"},
    )


@given(trajectories())
def test_render_parse_round_trip(traj):
    rendered = render_trajectory(traj)
    back = parse_trajectory(
        rendered,
        question=traj.question,
        query_time=traj.query_time,
        view_id=traj.view_id,
        options=traj.options,
    )
    assert structural_key(back) == structural_key(traj)
    assert render_trajectory(back) == rendered


@given(st.text(max_size=200))
def test_fuzz_parse_fragment_never_crashes(text):
    try:
        parse_fragment(text)
    except TraceError:
        pass


@given(st.text(max_size=200))
def test_fuzz_parse_tool_call_never_crashes(text):
    try:
        parse_tool_call(text)
    except (TraceError, ToolCallValidationError):
        pass


def _ok_step():
    call = parse_tool_call(RAG_BODY)
    return Step(thought=Thought("t"), action=call, observation=Observation("rag", "payload"))


def test_render_step_counts():
    text = render_step(_ok_step())
    assert text.count("<think>") == text.count("<tool>") == text.count("<information>") == 1


def test_answer_step_renders_nothing_after():
    step = Step(thought=Thought("done"), action=FinalAnswer("A"), observation=None)
    assert render_step(step).endswith("<answer>A</answer>")


def test_validate_format_all_ok():
    traj = Trajectory("q", Timestamp(1, 12, 0, 0), "A1", steps=tuple(_ok_step() for _ in range(5)))
    report = validate_format(traj)
    assert report.fraction_ok == 1.0 and report.trajectory_ok and report.answerless


def test_validate_format_counts_bad_steps():
    bad = Step(thought=None, action=None, observation=Observation("error", "x"), format_error="broken")
    steps = tuple([_ok_step()] * 3 + [bad])
    traj = Trajectory("q", Timestamp(1, 12, 0, 0), "A1", steps=steps)
    assert validate_format(traj).fraction_ok == 0.75


def test_validate_format_empty_trajectory():
    traj = Trajectory("q", Timestamp(1, 12, 0, 0), "A1")
    report = validate_format(traj)
    assert report.fraction_ok == 1.0 and report.answerless


def test_answer_must_be_last_step():
    answer = Step(thought=Thought("a"), action=FinalAnswer("A"), observation=None)
    with pytest.raises(TraceError):
        Trajectory("q", Timestamp(1, 12, 0, 0), "A1", steps=(answer, _ok_step()))


def test_terminate_call_yields_trajectory_answer():
    body = json.dumps({"name": "terminate", "arguments": {"answer": "C"}})
    text = f"<think>stop</think><tool>{body}</tool><information>Episode terminated.</information>"
    traj = parse_trajectory(text, question="q", query_time=Timestamp(1, 12, 0, 0), view_id="A1")
    assert traj.answer == FinalAnswer("C")
