"""Strict parsers for every model-output format the pipeline consumes.

Parsers are total: every input maps to a parse result or a typed error,
never an uncaught crash. Rejected lines and fields are reported through
diagnostics instead of being silently dropped.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional, Sequence

from ..core import Demonstration, KeywordPair, KnowledgeSet, MapsError


class Unparseable(MapsError):
    """No valid choice letter could be found in an answer."""


class InvalidJson(MapsError):
    """Single-call knowledge output was not the documented JSON object."""

    def __init__(self, diagnostic: str) -> None:
        super().__init__(diagnostic)
        self.diagnostic = diagnostic


@dataclass(frozen=True)
class ParsedKnowledge:
    """A parsed knowledge set plus diagnostics for every rejected piece."""

    knowledge: KnowledgeSet
    diagnostics: tuple[str, ...] = ()


_KEYWORD_HEADERS = {"keywords", "keywords:", "keyword pairs:"}


def parse_keywords(raw: str) -> tuple[list[KeywordPair], list[str]]:
    """Parse ``<src> = <tgt>`` lines into keyword pairs.

    Splits each line on the first ``" = "``; blank lines and one leading
    header line are ignored; exact duplicate pairs keep the first
    occurrence. Malformed lines land in diagnostics.
    """
    pairs: list[KeywordPair] = []
    seen: set[tuple[str, str]] = set()
    diagnostics: list[str] = []
    saw_content = False
    for lineno, line in enumerate(raw.splitlines(), 1):
        stripped = line.strip()
        if not stripped:
            continue
        if not saw_content and stripped.lower() in _KEYWORD_HEADERS:
            saw_content = True
            continue
        saw_content = True
        left, sep, right = line.partition(" = ")
        src, tgt = left.strip(), right.strip()
        if not sep or not src or not tgt:
            diagnostics.append(f"line {lineno}: not a '<src> = <tgt>' pair: {stripped!r}")
            continue
        if (src, tgt) in seen:
            continue
        seen.add((src, tgt))
        pairs.append(KeywordPair(src, tgt))
    return pairs, diagnostics


_NUMBERING_RE = re.compile(r"^\s*\d+[.)]\s*")

MAX_TOPICS = 5


def parse_topics(raw: str) -> list[str]:
    """Split a topic reply on newlines and commas; at most 5 topics kept."""
    topics: list[str] = []
    for chunk in re.split(r"[\n,]", raw):
        topic = _NUMBERING_RE.sub("", chunk).strip()
        if topic:
            topics.append(topic)
    return topics[:MAX_TOPICS]


_DEMO_LABEL_RE = re.compile(r"^(source|target)\s*:\s*(.*)$", re.IGNORECASE)


def parse_demo(raw: str) -> tuple[Optional[Demonstration], list[str]]:
    """Parse a ``Source:`` / ``Target:`` labeled demonstration.

    Both labels are required; the first occurrence of each wins and any
    trailing text is ignored. A missing or empty side yields an absent
    demo plus a diagnostic.
    """
    source: Optional[str] = None
    target: Optional[str] = None
    for line in raw.splitlines():
        match = _DEMO_LABEL_RE.match(line.strip())
        if not match:
            continue
        label, value = match.group(1).lower(), match.group(2).strip()
        if label == "source" and source is None:
            source = value
        elif label == "target" and target is None:
            target = value
    missing = [
        name for name, value in (("Source", source), ("Target", target)) if not value
    ]
    if missing:
        return None, [f"demonstration missing labeled line(s): {', '.join(missing)}"]
    assert source is not None and target is not None
    return Demonstration(source, target), []


_STANDALONE_LETTER_RE = re.compile(r"(?<![A-Za-z])([A-Z])(?![A-Za-z])")


def parse_scq_answer(raw: str, n_choices: int) -> int:
    """Map a single-choice answer to a 0-based index.

    Scans for the first standalone letter within ``A..A+n_choices-1``,
    which covers the forms "B", "(B)", "B.", "Option B", "answer is B".
    Letters outside the valid range (e.g. a leading "I") are skipped.
    """
    if not 2 <= n_choices <= 26:
        raise ValueError("n_choices must be in [2, 26]")
    for match in _STANDALONE_LETTER_RE.finditer(raw):
        index = ord(match.group(1)) - ord("A")
        if index < n_choices:
            return index
    raise Unparseable(f"no valid choice letter A..{chr(ord('A') + n_choices - 1)} in reply")


_FENCE_RE = re.compile(r"^```[a-zA-Z0-9]*\s*\n(.*?)\n?```\s*$", re.DOTALL)

_JSON_KEYS = {"keywords", "topics", "demo"}


def parse_json_knowledge(raw: str) -> ParsedKnowledge:
    """Parse single-call JSON knowledge output.

    Expects one object ``{"keywords": [[src, tgt], ...], "topics": [...],
    "demo": {"source": ..., "target": ...}}``; every key is optional but a
    present key must have the documented shape. A fenced code block
    wrapper is tolerated. Any JSON parse failure or shape violation raises
    :class:`InvalidJson`; the caller counts those toward the JSON-error
    rate rather than aborting.
    """
    text = raw.strip()
    fenced = _FENCE_RE.match(text)
    if fenced:
        text = fenced.group(1)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidJson(f"not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidJson("top-level JSON value is not an object")

    diagnostics = [f"unexpected key {key!r} ignored" for key in data if key not in _JSON_KEYS]

    keywords: list[KeywordPair] = []
    raw_keywords = data.get("keywords", [])
    if not isinstance(raw_keywords, list):
        raise InvalidJson("'keywords' must be a list of [src, tgt] pairs")
    for item in raw_keywords:
        if (
            not isinstance(item, (list, tuple))
            or len(item) != 2
            or not all(isinstance(side, str) for side in item)
        ):
            raise InvalidJson(f"keyword entry is not a [src, tgt] string pair: {item!r}")
        src, tgt = item[0].strip(), item[1].strip()
        if not src or not tgt:
            diagnostics.append(f"keyword pair with empty side dropped: {item!r}")
            continue
        keywords.append(KeywordPair(src, tgt))

    raw_topics = data.get("topics", [])
    if not isinstance(raw_topics, list) or not all(isinstance(t, str) for t in raw_topics):
        raise InvalidJson("'topics' must be a list of strings")
    topics = [t.strip() for t in raw_topics if t.strip()]
    if len(topics) != len(raw_topics):
        diagnostics.append("empty topic entries dropped")

    demo: Optional[Demonstration] = None
    raw_demo = data.get("demo")
    if raw_demo is not None:
        if (
            not isinstance(raw_demo, dict)
            or not isinstance(raw_demo.get("source"), str)
            or not isinstance(raw_demo.get("target"), str)
        ):
            raise InvalidJson("'demo' must be an object with string 'source' and 'target'")
        if raw_demo["source"].strip() and raw_demo["target"].strip():
            demo = Demonstration(raw_demo["source"].strip(), raw_demo["target"].strip())
        else:
            diagnostics.append("demo with an empty side dropped")

    return ParsedKnowledge(
        knowledge=KnowledgeSet(
            keywords=tuple(keywords), topics=tuple(topics[:MAX_TOPICS]), demo=demo
        ),
        diagnostics=tuple(diagnostics),
    )


# ---------------------------------------------------------------------------
# Inverse formatters: knowledge -> the prompt blocks the templates embed.
# ---------------------------------------------------------------------------


def format_keywords(pairs: Sequence[KeywordPair]) -> str:
    return "\n".join(f"{p.src_word} = {p.tgt_word}" for p in pairs)


def format_topics(topics: Sequence[str]) -> str:
    return ", ".join(topics)


def format_demo(demo: Optional[Demonstration]) -> str:
    if demo is None:
        return ""
    return f"Source: {demo.source}\nTarget: {demo.target}"


def format_three_in_one(knowledge: KnowledgeSet) -> str:
    """All three knowledge aspects as one labeled block; empty aspects skipped."""
    blocks: list[str] = []
    if knowledge.keywords:
        blocks.append("Keyword pairs:\n" + format_keywords(knowledge.keywords))
    if knowledge.topics:
        blocks.append("Topics: " + format_topics(knowledge.topics))
    if knowledge.demo is not None:
        blocks.append("Related example:\n" + format_demo(knowledge.demo))
    return "\n\n".join(blocks)
