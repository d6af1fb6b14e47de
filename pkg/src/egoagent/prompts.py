"""Canonical system prompts for the two episode modes.

These texts are contract, not copy: downstream consumers (and the golden
tests) compare them byte for byte, so edit with the same care as a wire
format.  The answering prompt teaches the tagged reasoning format and
embeds the three tool schemas verbatim; the generation prompt adds the
goal/format/hints framing, exposes the terminate tool, and names the
camera identity the agent is looking through.
"""

from __future__ import annotations

from .schemas import RAG_SCHEMA_TEXT, VIDEO_LLM_SCHEMA_TEXT, VLM_SCHEMA_TEXT

RAG_EXAMPLE_CALL = """<tool>
{
    "name": "rag",
    "arguments": {
        "level": "day",
        "keywords": ["screwdriver", "applause"],
        "start_time": "DAY1_11210217",
        "query_time": "DAY1_11220217"
    }
}
</tool>"""

TRAIN_PROMPT = (
    "Answer the given question. You must conduct reasoning inside <think> and "
    "</think> first every time before you get new information. After reasoning, if you "
    "find you lack some knowledge, you can call a tool from [rag, video_llm, vlm] "
    "by <tool> query </tool> and it will return the information between "
    "<information> and </information>. You can use tools as many times as your "
    "want. If you find no further external knowledge needed, you can provide the "
    "answer inside <answer> and </answer> after another thinking.\n"
    "The tools you can use are:\n"
    f"{RAG_SCHEMA_TEXT}\n"
    f"{VIDEO_LLM_SCHEMA_TEXT}\n"
    f"{VLM_SCHEMA_TEXT}\n"
    "For example, if you want to search for information in the RAG database, you "
    "can use the following tool:\n"
    f"{RAG_EXAMPLE_CALL}"
)

DATAGEN_PROMPT_TEMPLATE = """[BEGIN OF GOAL]

You are an expert AI assistant specializing in analyzing human behavior and reasoning from egocentric video descriptions. You will be provided with a list of useful tools to help in reasoning the task, and your goal is to solve the user’s question. The user’s question is following the format: Question: <question> <timestamp> Options: <options>. You can either rely on your own capabilities or perform actions with external tools to help you. You should consider both the frequency and cost of each tool to make the best decision.

[END OF GOAL]

[BEGIN OF FORMAT INSTRUCTIONS]

When answering questions:
1. You will be provided with previous actions you have taken, based on these actions, think step-by-step about how to approach the problem.
2. Show your reasoning process clearly before providing your next action.
3. The video observation length is 10-min max.
4. For visual questions, use `video_llm` and `vlm` to explore the visual context.
5. For temporal questions, use `rag` to explore the context before and after the event.
6. Only use the `terminate` tool after you have thoroughly explored the question with multiple tools.

[END OF FORMAT INSTRUCTIONS]

[BEGIN OF HINTS]

1. All tools provided are crucial to the solvement of the question. You MUST exploit the usage of all tools before answering the question.
2. You may want to use the same tool multiple times with different arguments to explore the problem from different angles, if needed.
3. Make a balance between the cost and the frequency of the tools.
4. Usually, solving a question requires over 5~10 steps of reasoning, and follows a hierarchical calling structure: rag => video_llm => vlm.
5. Do not use the terminate tool too early. Instead, try to explore the question with the available tools, and only use the terminate tool when you are confident enough or have considered all the options.

[END OF HINTS]

Always structure your responses with your thought process first, followed by any tool calls.
Think before you act. Think step-by-step about what information you need and which tool to use, then execute your plan exactly as reasoned without deviation. Output your thought process before using the tool, and you must strictly follow your thought process for the tool call. Currently, you are under the view of {identity}."""


def datagen_prompt(identity: str) -> str:
    """The generation-mode prompt with the camera identity substituted."""
    return DATAGEN_PROMPT_TEMPLATE.replace("{identity}", identity)
