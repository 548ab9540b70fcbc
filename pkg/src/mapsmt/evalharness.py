"""Corpus I/O, run persistence, significance testing, and report building.

Run files are line-delimited JSON with one record per line behind a header
line, append-only for crash safety. Reports are deterministic Markdown
tables with a machine-readable JSON twin shaped like the per-variant
score tables of MT evaluations: mean segment score per variant plus
paired-t-test significance markers against the baseline and rerank rows.
"""

from __future__ import annotations

import datetime as _dt
import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence

from scipy.special import betainc

from . import metrics
from .core import LangPair, MapsError, RunRecord, SourceSample, Variant
from .selectors import ScoreRequest, score_lex_overlap

RUN_SCHEMA = "maps-run/1"


class LineCountMismatch(MapsError):
    pass


class NotUtf8(MapsError):
    pass


class LengthMismatch(MapsError):
    pass


class TooFewSamples(MapsError):
    pass


class DuplicateLabel(MapsError):
    pass


class SampleSetMismatch(MapsError):
    pass


# ---------------------------------------------------------------------------
# Corpora
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Corpus:
    """A test set: either every sample has a reference, or none does."""

    lang_pair: LangPair
    samples: tuple[SourceSample, ...]

    def __post_init__(self) -> None:
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ValueError("sample ids must be unique within a corpus")
        with_ref = sum(s.reference is not None for s in self.samples)
        if 0 < with_ref < len(self.samples):
            raise ValueError("mixed corpus: some samples have references, some do not")

    @property
    def has_references(self) -> bool:
        return bool(self.samples) and self.samples[0].reference is not None


def _read_lines(path: str | Path) -> list[str]:
    try:
        text = Path(path).read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise NotUtf8(f"{path} is not valid UTF-8: {exc}") from exc
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def load_corpus(
    src_path: str | Path, ref_path: Optional[str | Path], lang_pair: LangPair
) -> Corpus:
    """Line-aligned corpus loading; line k of each file forms sample id "k"."""
    sources = _read_lines(src_path)
    references: Optional[list[str]] = None
    if ref_path is not None:
        references = _read_lines(ref_path)
        if len(references) != len(sources):
            raise LineCountMismatch(
                f"{src_path} has {len(sources)} lines but {ref_path} has {len(references)}"
            )
    samples = tuple(
        SourceSample(
            id=str(k),
            source=source,
            reference=None if references is None else references[k - 1],
        )
        for k, source in enumerate(sources, 1)
    )
    return Corpus(lang_pair, samples)


# ---------------------------------------------------------------------------
# Run persistence
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunHeader:
    variant: Variant
    lang_pair: LangPair
    created: str

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "schema": RUN_SCHEMA,
                "variant": self.variant.value,
                "lang_pair": str(self.lang_pair),
                "created": self.created,
            },
            ensure_ascii=False,
            sort_keys=True,
        )


class RunWriter:
    """Append-only run-file writer; one serialized record per line."""

    def __init__(self, path: str | Path, variant: Variant, lang_pair: LangPair) -> None:
        self.path = Path(path)
        new_file = not self.path.exists() or self.path.stat().st_size == 0
        self._fp = self.path.open("a", encoding="utf-8")
        if new_file:
            created = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
            self._fp.write(RunHeader(variant, lang_pair, created).to_json_line() + "\n")
            self._fp.flush()

    def write(self, record: RunRecord) -> None:
        self._fp.write(record.to_json_line() + "\n")
        self._fp.flush()

    def close(self) -> None:
        self._fp.close()

    def __enter__(self) -> "RunWriter":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


def write_run(
    path: str | Path, records: Sequence[RunRecord], variant: Variant, lang_pair: LangPair
) -> None:
    with RunWriter(path, variant, lang_pair) as writer:
        for record in records:
            writer.write(record)


def load_run(path: str | Path) -> tuple[RunHeader, list[RunRecord]]:
    with Path(path).open(encoding="utf-8") as fp:
        header_line = fp.readline()
        header_data = json.loads(header_line)
        if header_data.get("schema") != RUN_SCHEMA:
            raise ValueError(f"{path}: not a {RUN_SCHEMA} run file")
        header = RunHeader(
            variant=Variant(header_data["variant"]),
            lang_pair=LangPair.parse(header_data["lang_pair"]),
            created=header_data["created"],
        )
        records = [RunRecord.from_json_line(line) for line in fp if line.strip()]
    return header, records


# ---------------------------------------------------------------------------
# Paired t-test
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SignificanceResult:
    t_stat: float
    p_value: float
    n: int
    mean_diff: float


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> SignificanceResult:
    """Two-sided paired t-test on aligned score arrays.

    t = mean(d) / (sd(d) / sqrt(n)) with the sample standard deviation
    (n-1 denominator); the p-value comes from the Student-t CDF expressed
    through the regularized incomplete beta function. Degenerate cases
    follow fixed conventions so reports never see NaN: all-zero
    differences give t=0, p=1; zero spread around a nonzero mean gives
    t=+/-inf, p=0.
    """
    if len(a) != len(b):
        raise LengthMismatch(f"arrays differ in length: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise TooFewSamples("paired t-test needs at least two pairs")
    diffs = [x - y for x, y in zip(a, b)]
    mean = math.fsum(diffs) / n
    variance = math.fsum((d - mean) ** 2 for d in diffs) / (n - 1)
    if variance == 0.0:
        if mean == 0.0:
            return SignificanceResult(t_stat=0.0, p_value=1.0, n=n, mean_diff=0.0)
        return SignificanceResult(
            t_stat=math.copysign(math.inf, mean), p_value=0.0, n=n, mean_diff=mean
        )
    t = mean / math.sqrt(variance / n)
    df = n - 1
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return SignificanceResult(t_stat=t, p_value=p, n=n, mean_diff=mean)


# ---------------------------------------------------------------------------
# Preference aggregation
# ---------------------------------------------------------------------------


class Choice(enum.Enum):
    SYSTEM_A = "system_a"
    SYSTEM_B = "system_b"
    TIE = "tie"


@dataclass(frozen=True)
class PreferenceLabel:
    sample_id: str
    choice: Choice
    annotator_id: str


@dataclass(frozen=True)
class PreferenceSummary:
    win_a: float
    win_b: float
    tie: float


def aggregate_preferences(labels: Sequence[PreferenceLabel]) -> PreferenceSummary:
    """Win/tie fractions over all labels; one label per (sample, annotator)."""
    if not labels:
        raise ValueError("label list must be non-empty")
    seen: set[tuple[str, str]] = set()
    counts = {choice: 0 for choice in Choice}
    for label in labels:
        key = (label.sample_id, label.annotator_id)
        if key in seen:
            raise DuplicateLabel(f"duplicate label for {key}")
        seen.add(key)
        counts[label.choice] += 1
    n = len(labels)
    return PreferenceSummary(
        win_a=counts[Choice.SYSTEM_A] / n,
        win_b=counts[Choice.SYSTEM_B] / n,
        tie=counts[Choice.TIE] / n,
    )


# ---------------------------------------------------------------------------
# Report building
# ---------------------------------------------------------------------------

EvalScorer = Callable[[ScoreRequest], float]

SIGNIFICANCE_LEVEL = 0.05

_COMPARATORS = (Variant.BASELINE, Variant.RERANK)


@dataclass(frozen=True)
class Report:
    markdown: str
    data: dict[str, Any]

    def json_twin(self) -> str:
        return json.dumps(self.data, ensure_ascii=False, sort_keys=True, indent=2)


def _segment_scores(
    records: Sequence[RunRecord], lang_pair: LangPair, eval_scorer: Optional[EvalScorer]
) -> dict[str, float]:
    scores: dict[str, float] = {}
    for record in records:
        if record.error is not None or record.selection is None:
            continue
        if eval_scorer is not None:
            scores[record.sample_id] = eval_scorer(
                ScoreRequest(
                    src_lang=lang_pair.src,
                    tgt_lang=lang_pair.tgt,
                    source=record.source,
                    hypothesis=record.selected_text or "",
                    reference=record.reference,
                )
            )
        else:
            if record.selection.scores is None:
                raise ValueError(
                    f"record {record.sample_id!r} carries no selector scores; "
                    "pass an evaluation scorer"
                )
            scores[record.sample_id] = record.selection.scores[
                record.selection.selected_index
            ]
    return scores


def build_report(
    run_sets: Mapping[Variant, Sequence[RunRecord]],
    scorer_tag: str,
    *,
    eval_scorer: Optional[EvalScorer] = score_lex_overlap,
) -> Report:
    """Aggregate runs into one table per scorer plus appendices.

    Every run set must cover the same samples. Each variant row carries
    its mean segment score and paired-t-test p-values against the
    baseline and rerank rows (when present); rows beating every available
    comparator at p < 0.05 are bolded. Utilization and JSON-error-rate
    appendices follow. Output is a pure function of the inputs.
    """
    if not run_sets:
        raise ValueError("no run sets")
    variants = [v for v in Variant if v in run_sets]
    lang_pair = next(iter(run_sets.values()))[0].lang_pair

    per_variant_scores: dict[Variant, dict[str, float]] = {}
    sample_ids: Optional[list[str]] = None
    for variant in variants:
        scores = _segment_scores(run_sets[variant], lang_pair, eval_scorer)
        ids = sorted(scores)
        if sample_ids is None:
            sample_ids = ids
        elif ids != sample_ids:
            raise SampleSetMismatch(
                f"{variant.value} covers different samples than {variants[0].value}"
            )
        per_variant_scores[variant] = scores
    assert sample_ids is not None

    def aligned(variant: Variant) -> list[float]:
        return [per_variant_scores[variant][sid] for sid in sample_ids]

    comparators = [c for c in _COMPARATORS if c in per_variant_scores]
    rows: list[dict[str, Any]] = []
    for variant in variants:
        scores = aligned(variant)
        mean = math.fsum(scores) / len(scores)
        row: dict[str, Any] = {
            "variant": variant.value,
            "n": len(scores),
            "mean": mean,
        }
        significant_vs: list[bool] = []
        for comparator in _COMPARATORS:
            key = f"p_vs_{comparator.value}"
            if comparator not in per_variant_scores or comparator is variant:
                row[key] = None
                continue
            result = paired_t_test(scores, aligned(comparator))
            row[key] = result.p_value
            comparator_mean = math.fsum(aligned(comparator)) / len(sample_ids)
            significant_vs.append(
                result.p_value < SIGNIFICANCE_LEVEL and mean > comparator_mean
            )
        others = [c for c in comparators if c is not variant]
        row["significant"] = bool(others) and bool(significant_vs) and all(significant_vs)
        rows.append(row)

    utilization_data: dict[str, Any] = {}
    for variant in variants:
        if not variant.is_multi_candidate:
            continue
        try:
            breakdown = metrics.utilization(list(run_sets[variant]))
        except (metrics.MixedVariant, ValueError):
            continue
        utilization_data[variant.value] = {
            "fractions": breakdown.fractions,
            "score_delta_vs_baseline": breakdown.score_delta_vs_baseline,
        }

    json_error_data: dict[str, float] = {}
    for variant in variants:
        records = list(run_sets[variant])
        if any("json_error" in r.backend_meta for r in records):
            json_error_data[variant.value] = metrics.json_error_rate(records)

    data = {
        "scorer_tag": scorer_tag,
        "n_samples": len(sample_ids),
        "rows": rows,
        "utilization": utilization_data,
        "json_error_rate": json_error_data,
    }
    return Report(markdown=_render_markdown(data), data=data)


def _fmt_p(p: Optional[float]) -> str:
    if p is None:
        return "--"
    return f"{p:.4f}"


def _render_markdown(data: dict[str, Any]) -> str:
    lines = [
        f"# Translation report ({data['scorer_tag']})",
        "",
        f"Segments per variant: {data['n_samples']}. Bold variants beat both the",
        f"baseline and rerank rows at p < {SIGNIFICANCE_LEVEL} in the paired t-test.",
        "",
        "| Variant | Mean | p vs baseline | p vs rerank |",
        "|---|---|---|---|",
    ]
    for row in data["rows"]:
        name = f"**{row['variant']}**" if row["significant"] else row["variant"]
        lines.append(
            f"| {name} | {row['mean']:.6f} | {_fmt_p(row['p_vs_baseline'])} "
            f"| {_fmt_p(row['p_vs_rerank'])} |"
        )
    if data["utilization"]:
        lines += ["", "## Knowledge utilization", ""]
        for variant, util in sorted(data["utilization"].items()):
            lines.append(f"### {variant}")
            lines.append("")
            lines.append("| Provenance | Fraction selected | Mean score delta vs baseline |")
            lines.append("|---|---|---|")
            for kind in sorted(util["fractions"]):
                delta = util["score_delta_vs_baseline"].get(kind)
                delta_text = "--" if delta is None else f"{delta:+.6f}"
                lines.append(f"| {kind} | {util['fractions'][kind]:.4f} | {delta_text} |")
            lines.append("")
    if data["json_error_rate"]:
        lines += ["", "## Single-call JSON mining error rate", ""]
        lines.append("| Variant | Invalid JSON (%) |")
        lines.append("|---|---|")
        for variant, rate in sorted(data["json_error_rate"].items()):
            lines.append(f"| {variant} | {rate:.2f} |")
    lines.append("")
    return "\n".join(lines)
