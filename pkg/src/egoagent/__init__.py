"""Tool-orchestrated reasoning runtime over week-long timestamped egocentric
video logs: a frame-accurate timestamp grammar, a hierarchical summary index
with keyword retrieval, a tagged reasoning-trace format, validated tool
dispatch with deterministic mocks, a multi-turn episode driver, and the
reward/advantage machinery for grouped rollouts."""

from .bench import BenchReport, BenchRow, run_bench
from .episode import (
    EpisodeConfig,
    HttpPolicy,
    PolicyAdapter,
    ScriptedPolicy,
    assemble_system_prompt,
    format_user_message,
    inject_observation,
    run_episode,
)
from .memory import (
    ClipLog,
    ClipStore,
    HierIndex,
    RagQuery,
    RagResult,
    SummaryNode,
    build_hierarchy,
    concat_summary,
    ingest_clip_logs,
    load_index,
    match_keywords,
    query,
    save_index,
)
from .qa import QARecord, load_qa, save_qa
from .rollout import (
    RewardReport,
    RewardWeights,
    RolloutGroup,
    export_rollouts,
    export_sft,
    group_advantages,
    import_sft,
    run_rollout_group,
    score_trajectory,
)
from .schemas import TOOLS, ToolSchema, validate_arguments
from .synthetic import (
    PlantedEvent,
    RandomAnswerPolicy,
    SyntheticSpec,
    generate_synthetic_corpus,
    oracle_policy,
    oracle_script,
    random_spec,
)
from .timebase import (
    Duration,
    TimeRange,
    Timestamp,
    advance,
    format_range,
    format_timestamp,
    parse_range,
    parse_timestamp,
    validate_video_range,
)
from .tools import (
    CorpusContext,
    Dispatcher,
    Limits,
    ValidatedCall,
    make_mock_dispatcher,
    mock_rag,
    mock_video_llm,
    mock_vlm,
    preverify,
)
from .trace import (
    FinalAnswer,
    FormatReport,
    Observation,
    Step,
    Thought,
    ToolCall,
    Trajectory,
    parse_fragment,
    parse_tool_call,
    parse_trajectory,
    render_step,
    render_trajectory,
    validate_format,
)

__version__ = "0.1.0"
