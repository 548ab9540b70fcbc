"""Prompt templates, few-shot exemplar assets, and model-output parsers."""

from .parsers import (
    InvalidJson,
    ParsedKnowledge,
    Unparseable,
    format_demo,
    format_keywords,
    format_three_in_one,
    format_topics,
    parse_demo,
    parse_json_knowledge,
    parse_keywords,
    parse_scq_answer,
    parse_topics,
)
from .templates import (
    PLACEHOLDERS,
    TEMPLATE_IDS,
    PromptLibrary,
    PromptTemplate,
    UnboundPlaceholder,
    UnknownTemplate,
    lang_display_name,
)

__all__ = [
    "InvalidJson",
    "ParsedKnowledge",
    "Unparseable",
    "format_demo",
    "format_keywords",
    "format_three_in_one",
    "format_topics",
    "parse_demo",
    "parse_json_knowledge",
    "parse_keywords",
    "parse_scq_answer",
    "parse_topics",
    "PLACEHOLDERS",
    "TEMPLATE_IDS",
    "PromptLibrary",
    "PromptTemplate",
    "UnboundPlaceholder",
    "UnknownTemplate",
    "lang_display_name",
]
