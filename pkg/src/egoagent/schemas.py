"""Schemas for the agent's action space.

The three retrieval/vision tools are defined by canonical JSON texts that
the system prompt embeds verbatim; the structured ToolSchema objects are
parsed straight from those texts so there is a single source of truth.
The terminate tool exists only for trajectory generation and carries an
optional answer.

validate_arguments() is the strict gate between model output and the rest
of the runtime: unknown tools, missing or extra keys, enum violations and
malformed timestamps or windows are all rejected here, before any
semantic (corpus-bound) checks happen.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Mapping

from .timebase import TimebaseError, parse_range, parse_timestamp, validate_video_range

RAG_SCHEMA_TEXT = """{
    "name": "rag",
    "description": "Use this tool to search for information in the RAG database.",
    "arguments": {
        "type": "object",
        "properties": {
            "level": {
                "type": "str",
                "description": "The granularity of the search, choose from week|day|hour"
            },
            "keywords": {
                "type": "List[str]",
                "description": "The keywords to search for in the RAG database."
            },
            "start_time": {
                "type": "str",
                "description": "The timestamp of the start time of the search. The format should be DAYX_HHMMSSFF (X is the day number, HHMMSS is the hour, minute, second, and FF is the frame number(00~19))."
            },
            "query_time": {
                "type": "str",
                "description": "The timestamp of the query that was proposed by the user."
            }
        },
        "required": ["level", "keywords", "start_time", "query_time"]
    }
}"""

VIDEO_LLM_SCHEMA_TEXT = """{
    "name": "video_llm",
    "description": "Use this tool to get the answer from the video language model.",
    "arguments": {
        "type": "object",
        "properties": {
            "question": {
                "type": "str",
                "description": "The question you want to use the video language model to answer."
            },
            "range": {
                "type": "str",
                "description": "The timestamp range of the video to answer the question. Use the format 'DAYX_HHMMSSFF-DAYX_HHMMSSFF'. The ending timestamp should be strictly larger than the start timestamp. The length of the range should be smaller than 10 minutes, greater than 1 second."
            }
        },
        "required": ["question", "range"]
    }
}"""

VLM_SCHEMA_TEXT = """{
    "name": "vlm",
    "description": "Use this tool to get the answer from the vision language model.",
    "arguments": {
        "type": "object",
        "properties": {
            "question": {
                "type": "str",
                "description": "The question you want to use the vision language model to answer."
            },
            "timestamp": {
                "type": "str",
                "description": "The timestamp of the video to answer the question."
            }
        },
        "required": ["question", "timestamp"]
    }
}"""

TERMINATE_SCHEMA_TEXT = """{
    "name": "terminate",
    "description": "Use this tool to end the episode once the question is resolved.",
    "arguments": {
        "type": "object",
        "properties": {
            "answer": {
                "type": "str",
                "description": "The final answer choice, if one was reached."
            }
        },
        "required": []
    }
}"""

CANONICAL_SCHEMA_TEXTS = {
    "rag": RAG_SCHEMA_TEXT,
    "video_llm": VIDEO_LLM_SCHEMA_TEXT,
    "vlm": VLM_SCHEMA_TEXT,
}

RAG_LEVEL_CHOICES = ("week", "day", "hour")


class ToolCallValidationError(ValueError):
    """Base class for rejected tool calls."""


class UnknownToolError(ToolCallValidationError):
    pass


class MissingArgumentError(ToolCallValidationError):
    pass


class ExtraArgumentError(ToolCallValidationError):
    pass


class ArgumentTypeError(ToolCallValidationError):
    """Wrong value shape: bad enum, bad timestamp, bad window, wrong type."""


@dataclass(frozen=True)
class ArgumentSpec:
    name: str
    type: str
    description: str
    required: bool


@dataclass(frozen=True)
class ToolSchema:
    name: str
    description: str
    arguments: tuple[ArgumentSpec, ...]

    @property
    def required(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.arguments if a.required)

    @property
    def argument_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.arguments)

    def canonical_text(self) -> str:
        """The exact schema text embedded in prompts, for the three core tools."""
        if self.name in CANONICAL_SCHEMA_TEXTS:
            return CANONICAL_SCHEMA_TEXTS[self.name]
        return _schema_text_from_parts(self)


def _schema_from_text(text: str) -> ToolSchema:
    doc = json.loads(text)
    required = set(doc["arguments"]["required"])
    specs = tuple(
        ArgumentSpec(name=name, type=prop["type"], description=prop["description"], required=name in required)
        for name, prop in doc["arguments"]["properties"].items()
    )
    return ToolSchema(name=doc["name"], description=doc["description"], arguments=specs)


def _schema_text_from_parts(schema: ToolSchema) -> str:
    doc = {
        "name": schema.name,
        "description": schema.description,
        "arguments": {
            "type": "object",
            "properties": {
                a.name: {"type": a.type, "description": a.description} for a in schema.arguments
            },
            "required": list(schema.required),
        },
    }
    return json.dumps(doc, indent=4, ensure_ascii=False)


TOOLS: dict[str, ToolSchema] = {
    name: _schema_from_text(text)
    for name, text in {**CANONICAL_SCHEMA_TEXTS, "terminate": TERMINATE_SCHEMA_TEXT}.items()
}

TOOL_NAMES = tuple(TOOLS)


def _type_error(path: str, message: str, cause: Exception | None = None) -> ArgumentTypeError:
    err = ArgumentTypeError(f"arguments.{path}: {message}")
    if cause is not None:
        err.__cause__ = cause
    return err


def _require_str(args: Mapping[str, Any], key: str) -> str:
    value = args[key]
    if not isinstance(value, str):
        raise _type_error(key, f"expected a string, got {type(value).__name__}")
    return value


def validate_arguments(name: str, args: Mapping[str, Any]) -> dict[str, Any]:
    """Check an argument map against a tool schema.

    Returns the arguments reordered into schema order (canonical form for
    rendering).  Values stay as given; timestamps are parsed only to prove
    they are valid.
    """
    schema = TOOLS.get(name)
    if schema is None:
        raise UnknownToolError(f"unknown tool {name!r}; expected one of {', '.join(TOOL_NAMES)}")
    if not isinstance(args, Mapping):
        raise ArgumentTypeError(f"arguments must be an object, got {type(args).__name__}")
    for key in schema.required:
        if key not in args:
            raise MissingArgumentError(f"{name} call is missing required argument {key!r}")
    extra = set(args) - set(schema.argument_names)
    if extra:
        raise ExtraArgumentError(f"{name} call has unknown argument(s): {', '.join(sorted(extra))}")

    if name == "rag":
        level = _require_str(args, "level")
        if level not in RAG_LEVEL_CHOICES:
            raise _type_error("level", f"must be one of {'|'.join(RAG_LEVEL_CHOICES)}, got {level!r}")
        keywords = args["keywords"]
        if not isinstance(keywords, list) or not all(isinstance(k, str) for k in keywords):
            raise _type_error("keywords", "expected a list of strings")
        if not keywords:
            raise _type_error("keywords", "must not be empty")
        try:
            start = parse_timestamp(_require_str(args, "start_time"))
        except TimebaseError as exc:
            raise _type_error("start_time", str(exc), exc)
        try:
            query = parse_timestamp(_require_str(args, "query_time"))
        except TimebaseError as exc:
            raise _type_error("query_time", str(exc), exc)
        if start.total_frames >= query.total_frames:
            raise _type_error("start_time", "must be strictly before query_time")
    elif name == "video_llm":
        _require_str(args, "question")
        try:
            rng = parse_range(_require_str(args, "range"))
            validate_video_range(rng)
        except TimebaseError as exc:
            raise _type_error("range", str(exc), exc)
    elif name == "vlm":
        _require_str(args, "question")
        try:
            parse_timestamp(_require_str(args, "timestamp"))
        except TimebaseError as exc:
            raise _type_error("timestamp", str(exc), exc)
    elif name == "terminate":
        if "answer" in args:
            _require_str(args, "answer")

    return {key: args[key] for key in schema.argument_names if key in args}
