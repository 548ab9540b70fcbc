"""Quantitative analyses over runs and human annotations.

Covers keyword-quality precision/recall, weighted MQM penalty scoring,
hallucination deltas and ratios, knowledge-utilization breakdowns, and
ambiguity accuracy. All operations are pure; substring checks normalize
both sides to Unicode NFC and are case-sensitive.
"""

from __future__ import annotations

import json
import math
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

from .core import KeywordPair, MapsError, RunRecord


class EmptyKeywordUniverse(MapsError):
    """No keyword pairs at all: the shared denominator would be zero."""


class UnknownCategory(MapsError):
    pass


class BadSegmentId(MapsError):
    pass


class ZeroBaseline(MapsError):
    pass


class DuplicateSample(MapsError):
    pass


class MixedVariant(MapsError):
    pass


# ---------------------------------------------------------------------------
# Keyword quality: precision against source/reference, recall in hypothesis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KeywordQualitySample:
    """One (source, reference, keyword-guided hypothesis, keywords) tuple."""

    source: str
    reference: str
    hypothesis: str
    keywords: tuple[KeywordPair, ...]

    @classmethod
    def from_jsonable(cls, d: Mapping[str, Any]) -> "KeywordQualitySample":
        return cls(
            source=d["source"],
            reference=d["reference"],
            hypothesis=d["hypothesis"],
            keywords=tuple(KeywordPair(s, t) for s, t in d["keywords"]),
        )

    def to_jsonable(self) -> dict[str, Any]:
        return {
            "source": self.source,
            "reference": self.reference,
            "hypothesis": self.hypothesis,
            "keywords": [[p.src_word, p.tgt_word] for p in self.keywords],
        }


@dataclass(frozen=True)
class KeywordQuality:
    p_src: float
    p_tgt: float
    r: float


def _contains(needle: str, haystack: str) -> bool:
    """Contiguous-substring containment after NFC normalization of both."""
    return unicodedata.normalize("NFC", needle) in unicodedata.normalize("NFC", haystack)


def keyword_quality(samples: Sequence[KeywordQualitySample]) -> KeywordQuality:
    """Fraction of keyword pairs found in source / reference / hypothesis.

    All three ratios share the total keyword-pair count as denominator:
    the source-side precision counts source words appearing in the source
    sentence, the target-side precision counts target words appearing in
    the reference, and the recall counts target words appearing in the
    keyword-guided hypothesis.
    """
    total = sum(len(s.keywords) for s in samples)
    if total == 0:
        raise EmptyKeywordUniverse("no keyword pairs across all samples")
    src_hits = tgt_hits = hyp_hits = 0
    for sample in samples:
        for pair in sample.keywords:
            src_hits += _contains(pair.src_word, sample.source)
            tgt_hits += _contains(pair.tgt_word, sample.reference)
            hyp_hits += _contains(pair.tgt_word, sample.hypothesis)
    return KeywordQuality(src_hits / total, tgt_hits / total, hyp_hits / total)


def load_keyword_quality_samples(path: str | Path) -> list[KeywordQualitySample]:
    samples = []
    with Path(path).open(encoding="utf-8") as fp:
        for line in fp:
            if line.strip():
                samples.append(KeywordQualitySample.from_jsonable(json.loads(line)))
    return samples


# ---------------------------------------------------------------------------
# MQM penalty scoring
# ---------------------------------------------------------------------------


class Severity:
    MINOR = "minor"
    MAJOR = "major"
    ALL = (MINOR, MAJOR)


@dataclass(frozen=True)
class MqmError:
    category: str
    severity: str
    span: Optional[tuple[int, int]] = None

    def __post_init__(self) -> None:
        if self.severity not in Severity.ALL:
            raise ValueError(f"severity must be one of {Severity.ALL}")
        if self.span is not None:
            start, end = self.span
            if start < 0 or end <= start:
                raise ValueError(f"bad span {self.span}: need 0 <= start < end")


@dataclass(frozen=True)
class MqmAnnotation:
    segment_id: int
    errors: tuple[MqmError, ...] = ()

    @classmethod
    def from_jsonable(cls, d: Mapping[str, Any]) -> "MqmAnnotation":
        return cls(
            segment_id=d["segment_id"],
            errors=tuple(
                MqmError(
                    category=e["category"],
                    severity=e["severity"],
                    span=None if e.get("span") is None else (e["span"][0], e["span"][1]),
                )
                for e in d.get("errors", [])
            ),
        )


DEFAULT_TAXONOMY: dict[str, tuple[str, ...]] = {
    "accuracy": ("mistranslation", "omission", "addition", "untranslated-text"),
    "fluency": ("grammar", "punctuation", "spelling"),
    "style": ("awkward", "awkward-style"),
    "other": ("non-translation",),
}

# Most-specific key wins: "severity/class/category", then "severity/class",
# then bare category, then bare severity.
DEFAULT_WEIGHT_RULES: dict[str, float] = {
    "major": 5.0,
    "minor": 1.0,
    "minor/fluency/punctuation": 0.1,
    "non-translation": 25.0,
}


@dataclass(frozen=True)
class MqmWeights:
    """Configured error taxonomy plus severity/category weight rules."""

    taxonomy: Mapping[str, tuple[str, ...]] = field(
        default_factory=lambda: dict(DEFAULT_TAXONOMY)
    )
    rules: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHT_RULES))

    def __post_init__(self) -> None:
        if any(w < 0 for w in self.rules.values()):
            raise ValueError("weights must be non-negative")

    def category_class(self, category: str) -> str:
        for cls_name, categories in self.taxonomy.items():
            if category in categories:
                return cls_name
        raise UnknownCategory(f"category {category!r} not in configured taxonomy")

    def weight(self, category: str, severity: str) -> float:
        cls_name = self.category_class(category)
        for key in (
            f"{severity}/{cls_name}/{category}",
            f"{severity}/{cls_name}",
            category,
            severity,
        ):
            if key in self.rules:
                return self.rules[key]
        return 0.0

    @classmethod
    def from_config_file(cls, path: str | Path) -> "MqmWeights":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            taxonomy={k: tuple(v) for k, v in data["taxonomy"].items()},
            rules={k: float(v) for k, v in data["weights"].items()},
        )


def _validate_annotations(
    annotations: Sequence[MqmAnnotation], weights: MqmWeights, n_segments: int
) -> None:
    if n_segments < 1:
        raise ValueError("n_segments must be >= 1")
    for annotation in annotations:
        if not 0 <= annotation.segment_id < n_segments:
            raise BadSegmentId(
                f"segment_id {annotation.segment_id} outside [0, {n_segments})"
            )
        for error in annotation.errors:
            weights.category_class(error.category)


def mqm_score(
    annotations: Sequence[MqmAnnotation], weights: MqmWeights, n_segments: int
) -> float:
    """Average weighted error penalty per segment; 0 when error-free."""
    _validate_annotations(annotations, weights, n_segments)
    total = sum(
        weights.weight(e.category, e.severity) for a in annotations for e in a.errors
    )
    return total / n_segments


def error_category_breakdown(
    annotations: Sequence[MqmAnnotation], weights: MqmWeights, n_segments: int
) -> dict[str, float]:
    """Per-category penalty averages; values sum to :func:`mqm_score`."""
    _validate_annotations(annotations, weights, n_segments)
    totals: dict[str, float] = {}
    for annotation in annotations:
        for error in annotation.errors:
            totals[error.category] = totals.get(error.category, 0.0) + weights.weight(
                error.category, error.severity
            )
    return {category: total / n_segments for category, total in totals.items()}


def load_mqm_annotations(path: str | Path) -> list[MqmAnnotation]:
    annotations = []
    with Path(path).open(encoding="utf-8") as fp:
        for line in fp:
            if line.strip():
                annotations.append(MqmAnnotation.from_jsonable(json.loads(line)))
    return annotations


# ---------------------------------------------------------------------------
# Hallucination counts, deltas, ratios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HallucinationDelta:
    """Relative change in hallucination counts versus the baseline system.

    ``display_pct`` is rounded half-away-from-zero to whole percent for
    reports; ``exact`` keeps the unrounded value for downstream statistics.
    """

    exact: float
    display_pct: int


def _round_half_away_from_zero(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else int(math.ceil(x - 0.5))


def hallucination_delta(base_count: int, method_count: int) -> HallucinationDelta:
    if base_count < 0 or method_count < 0:
        raise ValueError("counts must be non-negative")
    if base_count == 0:
        raise ZeroBaseline("baseline hallucination count is zero")
    exact = 100.0 * (method_count - base_count) / base_count
    return HallucinationDelta(exact=exact, display_pct=_round_half_away_from_zero(exact))


@dataclass(frozen=True)
class TokenLabels:
    """Token-level hallucination labels produced by an external detector."""

    sample_id: str
    tokens: tuple[str, ...]
    labels: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.labels):
            raise ValueError(
                f"sample {self.sample_id!r}: {len(self.tokens)} tokens vs "
                f"{len(self.labels)} labels"
            )
        if any(label not in (0, 1) for label in self.labels):
            raise ValueError(f"sample {self.sample_id!r}: labels must be 0 or 1")


def load_token_labels(path: str | Path) -> list[TokenLabels]:
    rows = []
    with Path(path).open(encoding="utf-8") as fp:
        for line in fp:
            if line.strip():
                d = json.loads(line)
                rows.append(
                    TokenLabels(d["sample_id"], tuple(d["tokens"]), tuple(d["labels"]))
                )
    return rows


def count_token_hallucinations(rows: Iterable[TokenLabels]) -> int:
    return sum(sum(row.labels) for row in rows)


@dataclass(frozen=True)
class HallucinationLabel:
    sample_id: str
    is_hallucination: bool


def hallucination_ratio(labels: Sequence[HallucinationLabel]) -> float:
    """Fraction of sentences judged hallucinations; one label per sample."""
    if not labels:
        raise ValueError("label list must be non-empty")
    seen: set[str] = set()
    for label in labels:
        if label.sample_id in seen:
            raise DuplicateSample(f"duplicate label for sample {label.sample_id!r}")
        seen.add(label.sample_id)
    return sum(label.is_hallucination for label in labels) / len(labels)


# ---------------------------------------------------------------------------
# Knowledge utilization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UtilizationBreakdown:
    """How often each generation route won selection, and by how much.

    ``fractions`` sums to 1 over the provenance kinds of selected
    candidates. ``score_delta_vs_baseline`` is, per winning provenance,
    the mean selector-score margin over the same pool's baseline
    candidate; ``None`` when the records carry no scores or no baseline
    slot exists.
    """

    fractions: dict[str, float]
    score_delta_vs_baseline: dict[str, Optional[float]]


def utilization(records: Sequence[RunRecord]) -> UtilizationBreakdown:
    if not records:
        raise ValueError("no records")
    variants = {r.variant for r in records}
    if len(variants) > 1:
        raise MixedVariant(f"records mix variants: {sorted(v.value for v in variants)}")
    variant = next(iter(variants))
    if not variant.is_multi_candidate:
        raise ValueError(f"utilization needs a multi-candidate variant, got {variant.value}")

    counts: dict[str, int] = {}
    deltas: dict[str, list[float]] = {}
    total = 0
    for record in records:
        if record.selection is None or not record.pool.candidates:
            continue
        total += 1
        kind = record.pool.candidates[record.selection.selected_index].provenance.kind.value
        counts[kind] = counts.get(kind, 0) + 1
        baseline_index = record.pool.baseline_index()
        if record.selection.scores is not None and baseline_index is not None:
            margin = (
                record.selection.scores[record.selection.selected_index]
                - record.selection.scores[baseline_index]
            )
            deltas.setdefault(kind, []).append(margin)
    if total == 0:
        raise ValueError("no successfully selected records")
    return UtilizationBreakdown(
        fractions={kind: count / total for kind, count in sorted(counts.items())},
        score_delta_vs_baseline={
            kind: (sum(values) / len(values) if (values := deltas.get(kind)) else None)
            for kind in sorted(counts)
        },
    )


# ---------------------------------------------------------------------------
# Ambiguity accuracy, JSON-mining error rate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AmbiguityLabel:
    sample_id: str
    disambiguated: bool


def ambiguity_accuracy(labels: Sequence[AmbiguityLabel]) -> float:
    """Percentage of sentences judged successfully disambiguated."""
    if not labels:
        raise ValueError("label list must be non-empty")
    seen: set[str] = set()
    for label in labels:
        if label.sample_id in seen:
            raise DuplicateSample(f"duplicate label for sample {label.sample_id!r}")
        seen.add(label.sample_id)
    return 100.0 * sum(label.disambiguated for label in labels) / len(labels)


def json_error_rate(records: Sequence[RunRecord]) -> float:
    """Percentage of records whose single-call knowledge mining produced
    output that was not a valid JSON object."""
    if not records:
        raise ValueError("no records")
    errors = sum(bool(r.backend_meta.get("json_error")) for r in records)
    return 100.0 * errors / len(records)
