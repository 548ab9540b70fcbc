"""Round-trip and canonical-ordering properties of the shared value types."""

from __future__ import annotations

import random

import pytest

from mapsmt.core import (
    Candidate,
    CandidatePool,
    Demonstration,
    GenParams,
    KeywordPair,
    KnowledgeSet,
    LangPair,
    Provenance,
    ProvenanceKind,
    RunRecord,
    SelectionOutcome,
    SelectorId,
    SourceSample,
    Variant,
)

WORDS = ["cat", "猫", "dog", "狗", "bank", "银行", "änder", "ö", "a b", "x-y"]


def random_provenances(rng: random.Random) -> list[Provenance]:
    fixed = [
        Provenance.baseline(),
        Provenance.keyword(),
        Provenance.topic(),
        Provenance.demo(),
        Provenance.three_in_one(),
    ]
    chosen = rng.sample(fixed, rng.randint(1, 5))
    chosen += [Provenance.sampled(k) for k in range(1, rng.randint(1, 4))]
    return chosen


def random_record(rng: random.Random) -> RunRecord:
    variant = rng.choice(list(Variant))
    provenances = random_provenances(rng)
    candidates = [
        Candidate(
            text=rng.choice(WORDS) if rng.random() > 0.05 else "",
            provenance=p,
            gen_params=GenParams(rng.choice([0.0, 0.3]), rng.choice(["translate_base", "translate_kw"])),
        )
        for p in provenances
    ]
    pool = CandidatePool.assemble(f"s{rng.randint(0, 999)}", candidates)
    knowledge = None
    if rng.random() > 0.3:
        knowledge = KnowledgeSet(
            keywords=tuple(
                KeywordPair(rng.choice(WORDS), rng.choice(WORDS))
                for _ in range(rng.randint(0, 3))
            ),
            topics=tuple(rng.choice(WORDS) for _ in range(rng.randint(0, 3))),
            demo=Demonstration("src sent", "tgt sent") if rng.random() > 0.5 else None,
        )
    if rng.random() > 0.2:
        scores = None
        if rng.random() > 0.5:
            scores = tuple(round(rng.random(), 6) for _ in pool.candidates)
        idx = 0 if scores is None else scores.index(max(scores))
        selection = SelectionOutcome(idx, scores, rng.choice(list(SelectorId)))
        error = None
    else:
        selection, error = None, "BackendUnavailable: boom"
    return RunRecord(
        sample_id=pool.sample_id,
        variant=variant,
        lang_pair=LangPair("en", "zh"),
        source="some source",
        reference="some ref" if rng.random() > 0.4 else None,
        knowledge=knowledge,
        pool=pool,
        selection=selection,
        timings={k: rng.random() * 100 for k in rng.sample(["mine", "integrate", "select"], rng.randint(0, 3))},
        backend_meta={"backend_id": "mock", "json_error": rng.random() > 0.9},
        error=error,
    )


def test_run_record_round_trip_randomized():
    rng = random.Random(20240711)
    for _ in range(1000):
        record = random_record(rng)
        assert RunRecord.from_json_line(record.to_json_line()) == record


def test_knowledge_set_round_trip():
    ks = KnowledgeSet(
        keywords=(KeywordPair("cat", "猫"),),
        topics=("pets", "animals"),
        demo=Demonstration("Hi", "你好"),
    )
    assert KnowledgeSet.from_jsonable(ks.to_jsonable()) == ks
    empty = KnowledgeSet()
    assert KnowledgeSet.from_jsonable(empty.to_jsonable()) == empty


def test_pool_canonical_order_is_insertion_order_independent():
    rng = random.Random(7)
    base = [
        Candidate("a", Provenance.baseline(), GenParams(0.0, "t")),
        Candidate("b", Provenance.keyword(), GenParams(0.0, "t")),
        Candidate("c", Provenance.topic(), GenParams(0.0, "t")),
        Candidate("d", Provenance.demo(), GenParams(0.0, "t")),
        Candidate("e", Provenance.three_in_one(), GenParams(0.0, "t")),
        Candidate("f", Provenance.sampled(1), GenParams(0.3, "t")),
        Candidate("g", Provenance.sampled(2), GenParams(0.3, "t")),
    ]
    reference = CandidatePool.assemble("s", base)
    for _ in range(50):
        shuffled = base[:]
        rng.shuffle(shuffled)
        assert CandidatePool.assemble("s", shuffled) == reference
    assert [c.text for c in reference.candidates] == list("abcdefg")


def test_pool_rejects_duplicate_slots_and_bad_order():
    c1 = Candidate("a", Provenance.baseline(), GenParams(0.0, "t"))
    c2 = Candidate("b", Provenance.baseline(), GenParams(0.0, "t"))
    with pytest.raises(ValueError, match="duplicate provenance"):
        CandidatePool.assemble("s", [c1, c2])
    kw = Candidate("k", Provenance.keyword(), GenParams(0.0, "t"))
    with pytest.raises(ValueError, match="canonical slot order"):
        CandidatePool("s", (kw, c1))


def test_empty_candidate_text_is_retained():
    pool = CandidatePool.assemble(
        "s", [Candidate("", Provenance.baseline(), GenParams(0.0, "t"))]
    )
    assert pool.candidates[0].text == ""


def test_lang_pair_validation():
    with pytest.raises(ValueError):
        LangPair("en", "en")
    with pytest.raises(ValueError):
        LangPair("", "zh")
    assert str(LangPair.parse("en-zh")) == "en-zh"
    with pytest.raises(ValueError):
        LangPair.parse("enzh")


def test_source_sample_validation():
    with pytest.raises(ValueError):
        SourceSample("1", "")
    with pytest.raises(ValueError):
        SourceSample("", "x")


def test_selection_outcome_argmax_invariant():
    SelectionOutcome(1, (0.2, 0.5, 0.4, 0.5), SelectorId.LEX_OVERLAP)
    with pytest.raises(ValueError):
        SelectionOutcome(3, (0.2, 0.5, 0.4, 0.5), SelectorId.LEX_OVERLAP)
    with pytest.raises(ValueError):
        SelectionOutcome(0, (0.2, 0.5), SelectorId.LEX_OVERLAP)


def test_provenance_encoding():
    for p in [Provenance.baseline(), Provenance.three_in_one(), Provenance.sampled(3)]:
        assert Provenance.decode(p.encode()) == p
    with pytest.raises(ValueError):
        Provenance(ProvenanceKind.SAMPLED)
    with pytest.raises(ValueError):
        Provenance(ProvenanceKind.BASELINE, 1)


def test_variant_pool_sizes():
    assert Variant.BASELINE.pool_size == 1
    assert Variant.FIVE_SHOT.pool_size == 1
    assert Variant.THREE_IN_ONE.pool_size == 1
    assert Variant.MAPS_PLUS.pool_size == 5
    for v in (
        Variant.RERANK,
        Variant.MAPS,
        Variant.MAPS_JSON_MINE,
        Variant.ABLATE_KEYWORD,
        Variant.ABLATE_TOPIC,
        Variant.ABLATE_DEMO,
        Variant.KSR_KEYWORD,
        Variant.KSR_TOPIC,
        Variant.KSR_DEMO,
    ):
        assert v.pool_size == 4


def test_timings_keys_are_restricted():
    pool = CandidatePool("s", ())
    with pytest.raises(ValueError, match="unknown timing stages"):
        RunRecord(
            sample_id="s",
            variant=Variant.BASELINE,
            lang_pair=LangPair("en", "zh"),
            source="x",
            reference=None,
            knowledge=None,
            pool=pool,
            selection=None,
            timings={"translate": 1.0},
            error="err",
        )
