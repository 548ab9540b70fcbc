"""Shared domain types for the translation pipeline.

Every stage communicates through the immutable value types defined here.
All types serialize to plain JSON-able dicts via ``to_jsonable`` /
``from_jsonable`` pairs and round-trip exactly; run files store one
serialized :class:`RunRecord` per line.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence


class MapsError(Exception):
    """Base class for every typed error raised by this package."""


# ---------------------------------------------------------------------------
# Language pairs and samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LangPair:
    """A translation direction, e.g. ``en -> zh``. Codes are BCP-47 style."""

    src: str
    tgt: str

    def __post_init__(self) -> None:
        if not self.src or not self.tgt:
            raise ValueError("language codes must be non-empty")
        if self.src == self.tgt:
            raise ValueError("source and target language must differ")

    @classmethod
    def parse(cls, text: str) -> "LangPair":
        src, sep, tgt = text.partition("-")
        if not sep or not src or not tgt:
            raise ValueError(f"expected a 'src-tgt' language pair, got {text!r}")
        return cls(src, tgt)

    def __str__(self) -> str:
        return f"{self.src}-{self.tgt}"


@dataclass(frozen=True)
class SourceSample:
    """One test sentence: id, source text, optional reference translation."""

    id: str
    source: str
    reference: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("sample id must be non-empty")
        if not self.source:
            raise ValueError(f"sample {self.id!r}: source must be non-empty")


# ---------------------------------------------------------------------------
# Elicited knowledge
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KeywordPair:
    """A source-language keyword and its target-language translation."""

    src_word: str
    tgt_word: str

    def __post_init__(self) -> None:
        if not self.src_word.strip() or not self.tgt_word.strip():
            raise ValueError("keyword pair sides must be non-empty after trimming")


@dataclass(frozen=True)
class Demonstration:
    """A related example sentence with its translation."""

    source: str
    target: str

    def __post_init__(self) -> None:
        if not self.source.strip() or not self.target.strip():
            raise ValueError("demonstration sides must be non-empty")


@dataclass(frozen=True)
class KnowledgeSet:
    """Knowledge mined for one source sentence.

    Any of the three aspects may be empty or absent: mining failures are
    soft and downstream stages degrade gracefully.
    """

    keywords: tuple[KeywordPair, ...] = ()
    topics: tuple[str, ...] = ()
    demo: Optional[Demonstration] = None

    @property
    def is_empty(self) -> bool:
        return not self.keywords and not self.topics and self.demo is None

    def to_jsonable(self) -> dict[str, Any]:
        return {
            "keywords": [[p.src_word, p.tgt_word] for p in self.keywords],
            "topics": list(self.topics),
            "demo": None
            if self.demo is None
            else {"source": self.demo.source, "target": self.demo.target},
        }

    @classmethod
    def from_jsonable(cls, d: Mapping[str, Any]) -> "KnowledgeSet":
        demo = d.get("demo")
        return cls(
            keywords=tuple(KeywordPair(s, t) for s, t in d.get("keywords", [])),
            topics=tuple(d.get("topics", [])),
            demo=None if demo is None else Demonstration(demo["source"], demo["target"]),
        )


# ---------------------------------------------------------------------------
# Candidates and pools
# ---------------------------------------------------------------------------


class ProvenanceKind(enum.Enum):
    BASELINE = "baseline"
    KEYWORD = "keyword"
    TOPIC = "topic"
    DEMO = "demo"
    THREE_IN_ONE = "3in1"
    SAMPLED = "sampled"


_SLOT_ORDER = {
    ProvenanceKind.BASELINE: 0,
    ProvenanceKind.KEYWORD: 1,
    ProvenanceKind.TOPIC: 2,
    ProvenanceKind.DEMO: 3,
    ProvenanceKind.THREE_IN_ONE: 4,
    ProvenanceKind.SAMPLED: 5,
}


@dataclass(frozen=True)
class Provenance:
    """Which generation route produced a candidate.

    ``sample_index`` is set only for sampled candidates and numbers the
    i.i.d. draws (1-based) so repeated samples stay distinguishable.
    """

    kind: ProvenanceKind
    sample_index: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind is ProvenanceKind.SAMPLED:
            if self.sample_index is None or self.sample_index < 1:
                raise ValueError("sampled provenance requires a 1-based sample index")
        elif self.sample_index is not None:
            raise ValueError(f"{self.kind.value} provenance takes no sample index")

    @classmethod
    def baseline(cls) -> "Provenance":
        return cls(ProvenanceKind.BASELINE)

    @classmethod
    def keyword(cls) -> "Provenance":
        return cls(ProvenanceKind.KEYWORD)

    @classmethod
    def topic(cls) -> "Provenance":
        return cls(ProvenanceKind.TOPIC)

    @classmethod
    def demo(cls) -> "Provenance":
        return cls(ProvenanceKind.DEMO)

    @classmethod
    def three_in_one(cls) -> "Provenance":
        return cls(ProvenanceKind.THREE_IN_ONE)

    @classmethod
    def sampled(cls, k: int) -> "Provenance":
        return cls(ProvenanceKind.SAMPLED, k)

    def slot_key(self) -> tuple[int, int]:
        """Canonical slot-ordering key; a total function of the tag."""
        return (_SLOT_ORDER[self.kind], self.sample_index or 0)

    def encode(self) -> str:
        if self.kind is ProvenanceKind.SAMPLED:
            return f"sampled:{self.sample_index}"
        return self.kind.value

    @classmethod
    def decode(cls, text: str) -> "Provenance":
        if text.startswith("sampled:"):
            return cls.sampled(int(text.split(":", 1)[1]))
        return cls(ProvenanceKind(text))


@dataclass(frozen=True)
class GenParams:
    """Generation parameters a candidate was produced with."""

    temperature: float
    prompt_id: str


@dataclass(frozen=True)
class Candidate:
    """One translation hypothesis.

    ``text`` may be empty only because the backend returned empty; such
    candidates are kept (never dropped) so pool-size laws stay uniform.
    """

    text: str
    provenance: Provenance
    gen_params: GenParams

    def to_jsonable(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "provenance": self.provenance.encode(),
            "gen_params": {
                "temperature": self.gen_params.temperature,
                "prompt_id": self.gen_params.prompt_id,
            },
        }

    @classmethod
    def from_jsonable(cls, d: Mapping[str, Any]) -> "Candidate":
        gp = d["gen_params"]
        return cls(
            text=d["text"],
            provenance=Provenance.decode(d["provenance"]),
            gen_params=GenParams(gp["temperature"], gp["prompt_id"]),
        )


@dataclass(frozen=True)
class CandidatePool:
    """Ordered candidate set for one sample.

    Candidates sit in canonical slot order (baseline, keyword, topic, demo,
    three-in-one, sampled draws); assembly is always by slot, never by
    completion order, so concurrent generation cannot reorder pools.
    """

    sample_id: str
    candidates: tuple[Candidate, ...] = ()

    def __post_init__(self) -> None:
        keys = [c.provenance.slot_key() for c in self.candidates]
        if sorted(keys) != keys:
            raise ValueError("candidates must be in canonical slot order")
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate provenance slot in pool")

    @classmethod
    def assemble(cls, sample_id: str, candidates: Sequence[Candidate]) -> "CandidatePool":
        """Build a pool from candidates in any order, sorting by slot."""
        ordered = tuple(sorted(candidates, key=lambda c: c.provenance.slot_key()))
        return cls(sample_id, ordered)

    def __len__(self) -> int:
        return len(self.candidates)

    def index_of(self, kind: ProvenanceKind) -> Optional[int]:
        for i, c in enumerate(self.candidates):
            if c.provenance.kind is kind:
                return i
        return None

    def baseline_index(self) -> Optional[int]:
        return self.index_of(ProvenanceKind.BASELINE)

    def to_jsonable(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "candidates": [c.to_jsonable() for c in self.candidates],
        }

    @classmethod
    def from_jsonable(cls, d: Mapping[str, Any]) -> "CandidatePool":
        return cls(d["sample_id"], tuple(Candidate.from_jsonable(c) for c in d["candidates"]))


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------


class SelectorId(enum.Enum):
    LLM_SCQ = "scq"
    QE_WIRE = "qe"
    ORACLE_WIRE = "oracle"
    LEX_OVERLAP = "lex"


@dataclass(frozen=True)
class SelectionOutcome:
    """Which candidate was chosen, with per-candidate scores when scored.

    When scores are present the selected index is the argmax under the
    tie-break rule: the lowest canonical slot index among the maxima.
    ``note`` records degradations such as an unparseable LLM answer that
    fell back to the baseline slot.
    """

    selected_index: int
    scores: Optional[tuple[float, ...]]
    selector: SelectorId
    note: Optional[str] = None

    def __post_init__(self) -> None:
        if self.selected_index < 0:
            raise ValueError("selected_index must be non-negative")
        if self.scores is not None:
            if not self.scores:
                raise ValueError("scores, when present, must be non-empty")
            if self.selected_index >= len(self.scores):
                raise ValueError("selected_index out of range of scores")
            best = max(self.scores)
            if self.scores.index(best) != self.selected_index:
                raise ValueError(
                    "selected_index must be the first index attaining the max score"
                )

    def to_jsonable(self) -> dict[str, Any]:
        return {
            "selected_index": self.selected_index,
            "scores": None if self.scores is None else list(self.scores),
            "selector": self.selector.value,
            "note": self.note,
        }

    @classmethod
    def from_jsonable(cls, d: Mapping[str, Any]) -> "SelectionOutcome":
        scores = d["scores"]
        return cls(
            selected_index=d["selected_index"],
            scores=None if scores is None else tuple(scores),
            selector=SelectorId(d["selector"]),
            note=d.get("note"),
        )


# ---------------------------------------------------------------------------
# Pipeline variants and run records
# ---------------------------------------------------------------------------


class Variant(enum.Enum):
    """Every pool-construction recipe the engine knows, by CLI name."""

    BASELINE = "baseline"
    FIVE_SHOT = "5shot"
    RERANK = "rerank"
    MAPS = "maps"
    MAPS_PLUS = "maps-plus"
    THREE_IN_ONE = "3in1"
    MAPS_JSON_MINE = "maps-json"
    ABLATE_KEYWORD = "ablate-kw"
    ABLATE_TOPIC = "ablate-topic"
    ABLATE_DEMO = "ablate-demo"
    KSR_KEYWORD = "ksr-kw"
    KSR_TOPIC = "ksr-topic"
    KSR_DEMO = "ksr-demo"

    @property
    def pool_size(self) -> int:
        if self in (Variant.BASELINE, Variant.FIVE_SHOT, Variant.THREE_IN_ONE):
            return 1
        if self is Variant.MAPS_PLUS:
            return 5
        return 4

    @property
    def is_multi_candidate(self) -> bool:
        return self.pool_size > 1

    @property
    def mines_knowledge(self) -> bool:
        return self not in (Variant.BASELINE, Variant.FIVE_SHOT, Variant.RERANK)


_TIMING_STAGES = frozenset({"mine", "integrate", "select"})


@dataclass(frozen=True)
class RunRecord:
    """Full per-sentence trace of one pipeline execution.

    ``error`` is set (and ``selection`` may be absent, the pool empty) when
    the sample failed; runs continue past per-sample failures.
    """

    sample_id: str
    variant: Variant
    lang_pair: LangPair
    source: str
    reference: Optional[str]
    knowledge: Optional[KnowledgeSet]
    pool: CandidatePool
    selection: Optional[SelectionOutcome]
    timings: dict[str, float] = field(default_factory=dict)
    backend_meta: dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None

    def __post_init__(self) -> None:
        unknown = set(self.timings) - _TIMING_STAGES
        if unknown:
            raise ValueError(f"unknown timing stages: {sorted(unknown)}")
        if self.selection is not None and self.selection.selected_index >= max(
            len(self.pool), 1
        ):
            raise ValueError("selection index out of range of pool")

    @property
    def selected_text(self) -> Optional[str]:
        if self.selection is None or not self.pool.candidates:
            return None
        return self.pool.candidates[self.selection.selected_index].text

    @property
    def selected_provenance(self) -> Optional[Provenance]:
        if self.selection is None or not self.pool.candidates:
            return None
        return self.pool.candidates[self.selection.selected_index].provenance

    def to_jsonable(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "variant": self.variant.value,
            "lang_pair": str(self.lang_pair),
            "source": self.source,
            "reference": self.reference,
            "knowledge": None if self.knowledge is None else self.knowledge.to_jsonable(),
            "pool": self.pool.to_jsonable(),
            "selection": None if self.selection is None else self.selection.to_jsonable(),
            "timings": dict(self.timings),
            "backend_meta": dict(self.backend_meta),
            "error": self.error,
        }

    @classmethod
    def from_jsonable(cls, d: Mapping[str, Any]) -> "RunRecord":
        return cls(
            sample_id=d["sample_id"],
            variant=Variant(d["variant"]),
            lang_pair=LangPair.parse(d["lang_pair"]),
            source=d["source"],
            reference=d["reference"],
            knowledge=None
            if d["knowledge"] is None
            else KnowledgeSet.from_jsonable(d["knowledge"]),
            pool=CandidatePool.from_jsonable(d["pool"]),
            selection=None
            if d["selection"] is None
            else SelectionOutcome.from_jsonable(d["selection"]),
            timings=dict(d["timings"]),
            backend_meta=dict(d["backend_meta"]),
            error=d.get("error"),
        )

    def to_json_line(self) -> str:
        return json.dumps(self.to_jsonable(), ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json_line(cls, line: str) -> "RunRecord":
        return cls.from_jsonable(json.loads(line))
