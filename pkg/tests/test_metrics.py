"""Metric correctness against hand computations and brute-force oracles."""

from __future__ import annotations

import random
import unicodedata

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapsmt.core import (
    Candidate,
    CandidatePool,
    GenParams,
    KeywordPair,
    LangPair,
    Provenance,
    RunRecord,
    SelectionOutcome,
    SelectorId,
    Variant,
)
from mapsmt.metrics import (
    AmbiguityLabel,
    BadSegmentId,
    DuplicateSample,
    EmptyKeywordUniverse,
    HallucinationLabel,
    KeywordQualitySample,
    MixedVariant,
    MqmAnnotation,
    MqmError,
    MqmWeights,
    TokenLabels,
    UnknownCategory,
    ZeroBaseline,
    ambiguity_accuracy,
    count_token_hallucinations,
    error_category_breakdown,
    hallucination_delta,
    hallucination_ratio,
    json_error_rate,
    keyword_quality,
    mqm_score,
    utilization,
)

# ---------------------------------------------------------------------------
# Independent brute-force oracle for keyword quality, written before the
# main implementation: explicit character-window scans, no `in` operator.
# ---------------------------------------------------------------------------


def _naive_contains(needle: str, haystack: str) -> bool:
    needle = unicodedata.normalize("NFC", needle)
    haystack = unicodedata.normalize("NFC", haystack)
    n, h = len(needle), len(haystack)
    if n == 0:
        return True
    for start in range(h - n + 1):
        match = True
        for offset in range(n):
            if haystack[start + offset] != needle[offset]:
                match = False
                break
        if match:
            return True
    return False


def brute_force_keyword_quality(samples):
    total = src_hits = tgt_hits = hyp_hits = 0
    for s in samples:
        for pair in s.keywords:
            total += 1
            if _naive_contains(pair.src_word, s.source):
                src_hits += 1
            if _naive_contains(pair.tgt_word, s.reference):
                tgt_hits += 1
            if _naive_contains(pair.tgt_word, s.hypothesis):
                hyp_hits += 1
    return src_hits / total, tgt_hits / total, hyp_hits / total


_ALPHABET = "abcde猫狗爱 Ωé"


def random_kq_samples(rng: random.Random, n: int) -> list[KeywordQualitySample]:
    def text(k: int) -> str:
        return "".join(rng.choice(_ALPHABET) for _ in range(k))

    samples = []
    for _ in range(n):
        source = text(rng.randint(3, 20))
        keywords = []
        for _ in range(rng.randint(0, 4)):
            # Mix of planted substrings and random words.
            if rng.random() < 0.5 and len(source) >= 2:
                start = rng.randrange(len(source) - 1)
                sw = source[start : start + rng.randint(1, 3)].strip() or "x"
            else:
                sw = text(rng.randint(1, 4)).strip() or "y"
            keywords.append(KeywordPair(sw, text(rng.randint(1, 4)).strip() or "z"))
        samples.append(
            KeywordQualitySample(
                source=source,
                reference=text(rng.randint(3, 15)),
                hypothesis=text(rng.randint(3, 15)),
                keywords=tuple(keywords),
            )
        )
    return samples


def test_keyword_quality_matches_brute_force_oracle():
    rng = random.Random(424242)
    samples = random_kq_samples(rng, 200)
    while sum(len(s.keywords) for s in samples) == 0:
        samples = random_kq_samples(rng, 200)
    result = keyword_quality(samples)
    oracle = brute_force_keyword_quality(samples)
    assert (result.p_src, result.p_tgt, result.r) == oracle


def test_keyword_quality_hand_example():
    sample = KeywordQualitySample(
        source="the cat and dog",
        reference="猫在这里",
        hypothesis="猫和狗",
        keywords=(KeywordPair("cat", "猫"), KeywordPair("dog", "狗")),
    )
    result = keyword_quality([sample])
    assert result.p_src == 1.0
    assert result.p_tgt == 0.5
    assert result.r == 1.0


def test_keyword_quality_full_reference_containment():
    samples = [
        KeywordQualitySample("src a", "目标句", "whatever", (KeywordPair("a", "目标句"),)),
        KeywordQualitySample("src b", "另一句", "other", (KeywordPair("b", "另一句"),)),
    ]
    assert keyword_quality(samples).p_tgt == 1.0


def test_keyword_quality_empty_universe():
    samples = [KeywordQualitySample("a", "b", "c", ())]
    with pytest.raises(EmptyKeywordUniverse):
        keyword_quality(samples)


def test_keyword_quality_permutation_invariance():
    rng = random.Random(7)
    samples = random_kq_samples(rng, 30)
    while sum(len(s.keywords) for s in samples) == 0:
        samples = random_kq_samples(rng, 30)
    base = keyword_quality(samples)
    shuffled = samples[:]
    rng.shuffle(shuffled)
    shuffled = [
        KeywordQualitySample(
            s.source,
            s.reference,
            s.hypothesis,
            tuple(sorted(s.keywords, key=lambda p: rng.random())),
        )
        for s in shuffled
    ]
    assert keyword_quality(shuffled) == base


def test_keyword_quality_nfc_invariance():
    composed = KeywordQualitySample(
        source="café au lait",
        reference="café",
        hypothesis="café",
        keywords=(KeywordPair("café", "café"),),
    )
    decomposed = KeywordQualitySample(
        source="café au lait",
        reference="café",
        hypothesis="café",
        keywords=(KeywordPair("café", "café"),),
    )
    assert keyword_quality([composed]) == keyword_quality([decomposed])


def test_keyword_quality_is_case_sensitive():
    sample = KeywordQualitySample("The Cat", "x", "x", (KeywordPair("cat", "x"),))
    assert keyword_quality([sample]).p_src == 0.0


# ---------------------------------------------------------------------------
# MQM scoring
# ---------------------------------------------------------------------------


def test_mqm_score_hand_fixture():
    annotations = [
        MqmAnnotation(0, (MqmError("mistranslation", "major"),)),
        MqmAnnotation(1, (MqmError("awkward-style", "minor"),)),
    ]
    assert mqm_score(annotations, MqmWeights(), n_segments=2) == 3.0


def test_mqm_score_no_errors():
    assert mqm_score([], MqmWeights(), n_segments=10) == 0.0
    assert mqm_score([MqmAnnotation(0, ())], MqmWeights(), n_segments=1) == 0.0


def test_mqm_score_minor_punctuation_weight():
    annotations = [MqmAnnotation(0, (MqmError("punctuation", "minor"),))]
    assert mqm_score(annotations, MqmWeights(), n_segments=1) == 0.1


def test_mqm_score_non_translation_weight():
    annotations = [MqmAnnotation(0, (MqmError("non-translation", "major"),))]
    assert mqm_score(annotations, MqmWeights(), n_segments=1) == 25.0


def test_mqm_major_punctuation_uses_major_weight():
    annotations = [MqmAnnotation(0, (MqmError("punctuation", "major"),))]
    assert mqm_score(annotations, MqmWeights(), n_segments=1) == 5.0


def test_mqm_unknown_category():
    with pytest.raises(UnknownCategory):
        mqm_score(
            [MqmAnnotation(0, (MqmError("vibes", "minor"),))], MqmWeights(), n_segments=1
        )


def test_mqm_bad_segment_id():
    with pytest.raises(BadSegmentId):
        mqm_score(
            [MqmAnnotation(5, (MqmError("grammar", "minor"),))], MqmWeights(), n_segments=2
        )


def test_mqm_breakdown_hand_fixture():
    annotations = [
        MqmAnnotation(0, (MqmError("mistranslation", "major"),)),
        MqmAnnotation(1, (MqmError("awkward-style", "minor"),)),
    ]
    breakdown = error_category_breakdown(annotations, MqmWeights(), n_segments=2)
    assert breakdown == {"mistranslation": 2.5, "awkward-style": 0.5}


def test_mqm_breakdown_empty():
    assert error_category_breakdown([], MqmWeights(), n_segments=3) == {}


_CATEGORIES = [c for cats in MqmWeights().taxonomy.values() for c in cats]


def test_mqm_breakdown_sums_to_score_on_random_sets():
    rng = random.Random(1234)
    weights = MqmWeights()
    for _ in range(100):
        n_segments = rng.randint(1, 8)
        annotations = [
            MqmAnnotation(
                rng.randrange(n_segments),
                tuple(
                    MqmError(rng.choice(_CATEGORIES), rng.choice(["minor", "major"]))
                    for _ in range(rng.randint(0, 4))
                ),
            )
            for _ in range(rng.randint(0, 6))
        ]
        total = mqm_score(annotations, weights, n_segments)
        breakdown = error_category_breakdown(annotations, weights, n_segments)
        assert abs(sum(breakdown.values()) - total) < 1e-12
        assert total >= 0


def test_mqm_weights_reject_negative():
    with pytest.raises(ValueError):
        MqmWeights(rules={"major": -1.0})


def test_mqm_weights_config_file(tmp_path):
    path = tmp_path / "weights.json"
    path.write_text(
        '{"taxonomy": {"accuracy": ["mistranslation"]}, "weights": {"major": 10}}',
        encoding="utf-8",
    )
    weights = MqmWeights.from_config_file(path)
    assert weights.weight("mistranslation", "major") == 10.0


def test_mqm_error_span_validation():
    with pytest.raises(ValueError):
        MqmError("grammar", "minor", span=(4, 2))
    with pytest.raises(ValueError):
        MqmError("grammar", "silly")
    MqmError("grammar", "minor", span=(0, 3))


# ---------------------------------------------------------------------------
# Hallucination metrics
# ---------------------------------------------------------------------------


def test_hallucination_delta_hand_values():
    delta = hallucination_delta(100, 92)
    assert delta.display_pct == -8
    assert delta.exact == -8.0


def test_hallucination_delta_identity():
    delta = hallucination_delta(57, 57)
    assert delta.display_pct == 0 and delta.exact == 0.0


def test_hallucination_delta_zero_baseline():
    with pytest.raises(ZeroBaseline):
        hallucination_delta(0, 5)


def test_hallucination_delta_rounding_half_away_from_zero():
    assert hallucination_delta(200, 197).display_pct == -2  # -1.5 -> -2
    assert hallucination_delta(200, 203).display_pct == 2  # +1.5 -> +2
    assert hallucination_delta(200, 197).exact == -1.5


def test_token_labels_validation_and_counting():
    rows = [
        TokenLabels("a", ("t1", "t2"), (0, 1)),
        TokenLabels("b", ("x",), (1,)),
    ]
    assert count_token_hallucinations(rows) == 2
    with pytest.raises(ValueError):
        TokenLabels("c", ("t1",), (0, 1))
    with pytest.raises(ValueError):
        TokenLabels("d", ("t1",), (2,))


def test_hallucination_ratio():
    labels = [
        HallucinationLabel("1", True),
        HallucinationLabel("2", False),
        HallucinationLabel("3", False),
        HallucinationLabel("4", False),
    ]
    assert hallucination_ratio(labels) == 0.25
    assert hallucination_ratio([HallucinationLabel("1", False)]) == 0.0


def test_hallucination_ratio_duplicate_sample():
    with pytest.raises(DuplicateSample):
        hallucination_ratio([HallucinationLabel("1", True), HallucinationLabel("1", False)])


# ---------------------------------------------------------------------------
# Utilization
# ---------------------------------------------------------------------------


def _record(selected_slot: str, scores=None, variant=Variant.MAPS, sample_id="s1"):
    slots = ["baseline", "keyword", "topic", "demo"]
    candidates = [
        Candidate(f"text-{slot}", Provenance.decode(slot), GenParams(0.0, "t"))
        for slot in slots
    ]
    pool = CandidatePool.assemble(sample_id, candidates)
    index = slots.index(selected_slot)
    if scores is None:
        score_tuple = None
    else:
        score_tuple = tuple(scores)
    selection = SelectionOutcome(index, score_tuple, SelectorId.LEX_OVERLAP)
    return RunRecord(
        sample_id=sample_id,
        variant=variant,
        lang_pair=LangPair("en", "zh"),
        source="src",
        reference="ref",
        knowledge=None,
        pool=pool,
        selection=selection,
        timings={},
        backend_meta={},
    )


def test_utilization_counts_each_provenance():
    records = [
        _record("keyword", sample_id="1"),
        _record("topic", sample_id="2"),
        _record("demo", sample_id="3"),
        _record("baseline", sample_id="4"),
    ]
    breakdown = utilization(records)
    assert breakdown.fractions == {
        "baseline": 0.25,
        "keyword": 0.25,
        "topic": 0.25,
        "demo": 0.25,
    }


def test_utilization_all_baseline():
    records = [_record("baseline", sample_id=str(i)) for i in range(5)]
    assert utilization(records).fractions == {"baseline": 1.0}


def test_utilization_fractions_sum_to_one_randomized():
    rng = random.Random(31337)
    slots = ["baseline", "keyword", "topic", "demo"]
    for _ in range(1000):
        records = [
            _record(rng.choice(slots), sample_id=str(i))
            for i in range(rng.randint(1, 12))
        ]
        total = sum(utilization(records).fractions.values())
        assert abs(total - 1.0) <= 1e-12


def test_utilization_score_margin_vs_baseline():
    records = [
        _record("topic", scores=[0.2, 0.1, 0.9, 0.3], sample_id="1"),
        _record("topic", scores=[0.4, 0.1, 0.5, 0.3], sample_id="2"),
        _record("baseline", scores=[0.9, 0.1, 0.5, 0.3], sample_id="3"),
    ]
    breakdown = utilization(records)
    assert breakdown.score_delta_vs_baseline["topic"] == pytest.approx((0.7 + 0.1) / 2)
    assert breakdown.score_delta_vs_baseline["baseline"] == pytest.approx(0.0)


def test_utilization_rejects_mixed_variants():
    with pytest.raises(MixedVariant):
        utilization([_record("topic"), _record("topic", variant=Variant.RERANK)])


def test_utilization_rejects_single_candidate_variant():
    with pytest.raises(ValueError):
        utilization([_record("topic", variant=Variant.BASELINE)])


# ---------------------------------------------------------------------------
# Ambiguity accuracy and JSON error rate
# ---------------------------------------------------------------------------


def test_ambiguity_accuracy_counting():
    labels = [AmbiguityLabel(str(i), i < 13) for i in range(20)]
    assert ambiguity_accuracy(labels) == 65.0


def test_ambiguity_accuracy_all_true():
    assert ambiguity_accuracy([AmbiguityLabel("1", True)]) == 100.0


def test_ambiguity_accuracy_empty_rejected():
    with pytest.raises(ValueError):
        ambiguity_accuracy([])


def test_ambiguity_accuracy_duplicate():
    with pytest.raises(DuplicateSample):
        ambiguity_accuracy([AmbiguityLabel("1", True), AmbiguityLabel("1", True)])


def test_json_error_rate():
    def rec(sample_id: str, flag: bool) -> RunRecord:
        r = _record("baseline", sample_id=sample_id)
        return RunRecord(
            **{
                **{f: getattr(r, f) for f in (
                    "sample_id", "variant", "lang_pair", "source", "reference",
                    "knowledge", "pool", "selection", "timings", "error",
                )},
                "backend_meta": {"json_error": flag},
            }
        )

    records = [rec(str(i), i < 2) for i in range(100)]
    assert json_error_rate(records) == 2.0


# Ratio-range sanity over random metric inputs.
@given(st.lists(st.booleans(), min_size=1, max_size=50))
@settings(max_examples=200)
def test_ratios_stay_in_range(flags):
    labels = [HallucinationLabel(str(i), f) for i, f in enumerate(flags)]
    assert 0.0 <= hallucination_ratio(labels) <= 1.0
    amb = [AmbiguityLabel(str(i), f) for i, f in enumerate(flags)]
    assert 0.0 <= ambiguity_accuracy(amb) <= 100.0
