"""Shared fixtures: scripting mock replies for every pipeline variant.

``script_sample`` registers, on a mock backend, every completion a variant
will issue for one sample, mirroring the engine's prompt construction. A
missing reply still surfaces as a loud MockMiss, so drift between the
scripter and the engine cannot pass silently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from mapsmt.core import (
    Candidate,
    CandidatePool,
    Demonstration,
    GenParams,
    KeywordPair,
    KnowledgeSet,
    Provenance,
    SourceSample,
    Variant,
)
from mapsmt.gateway import MockBackend
from mapsmt.pipeline import KSR_SEED_TAGS, RERANK_SEED_TAGS, TranslationEngine
from mapsmt.promptkit import (
    InvalidJson,
    format_demo,
    format_keywords,
    format_topics,
    parse_demo,
    parse_json_knowledge,
    parse_keywords,
    parse_topics,
)
from mapsmt.selectors import compose_scq

DEFAULT_KNOWLEDGE = KnowledgeSet(
    keywords=(),
    topics=("general",),
    demo=None,
)


@dataclass
class SampleScript:
    """What the mock should say for one sample."""

    knowledge: KnowledgeSet = DEFAULT_KNOWLEDGE
    slot_texts: dict[str, str] = field(default_factory=dict)
    json_raw: Optional[str] = None  # overrides the auto-formatted JSON reply
    scq_reply: Optional[str] = None

    def text_for(self, sample: SourceSample, slot: str) -> str:
        return self.slot_texts.get(slot, f"cand-{sample.id}-{slot}")


def knowledge_json(knowledge: KnowledgeSet) -> str:
    payload: dict = {
        "keywords": [[p.src_word, p.tgt_word] for p in knowledge.keywords],
        "topics": list(knowledge.topics),
    }
    if knowledge.demo is not None:
        payload["demo"] = {
            "source": knowledge.demo.source,
            "target": knowledge.demo.target,
        }
    return json.dumps(payload, ensure_ascii=False)


def _mining_replies(script: SampleScript) -> dict[str, str]:
    k = script.knowledge
    return {
        "kw_mine": format_keywords(k.keywords),
        "topic_mine": format_topics(k.topics),
        "demo_mine": format_demo(k.demo),
    }


def _effective_knowledge(script: SampleScript, json_path: bool) -> KnowledgeSet:
    """Reproduce what the engine will parse out of the scripted replies."""
    if json_path:
        raw = script.json_raw if script.json_raw is not None else knowledge_json(script.knowledge)
        try:
            return parse_json_knowledge(raw).knowledge
        except InvalidJson:
            return KnowledgeSet()
    replies = _mining_replies(script)
    keywords, _ = parse_keywords(replies["kw_mine"])
    topics = parse_topics(replies["topic_mine"])
    demo, _ = parse_demo(replies["demo_mine"])
    return KnowledgeSet(tuple(keywords), tuple(topics), demo)


_VARIANT_SLOTS: dict[Variant, tuple[str, ...]] = {
    Variant.BASELINE: ("baseline",),
    Variant.FIVE_SHOT: ("baseline",),
    Variant.RERANK: ("baseline", "sampled:1", "sampled:2", "sampled:3"),
    Variant.MAPS: ("baseline", "keyword", "topic", "demo"),
    Variant.MAPS_JSON_MINE: ("baseline", "keyword", "topic", "demo"),
    Variant.MAPS_PLUS: ("baseline", "keyword", "topic", "demo", "3in1"),
    Variant.THREE_IN_ONE: ("3in1",),
    Variant.ABLATE_KEYWORD: ("baseline", "topic", "demo", "sampled:1"),
    Variant.ABLATE_TOPIC: ("baseline", "keyword", "demo", "sampled:1"),
    Variant.ABLATE_DEMO: ("baseline", "keyword", "topic", "sampled:1"),
    Variant.KSR_KEYWORD: ("sampled:1", "sampled:2", "sampled:3", "sampled:4"),
    Variant.KSR_TOPIC: ("sampled:1", "sampled:2", "sampled:3", "sampled:4"),
    Variant.KSR_DEMO: ("sampled:1", "sampled:2", "sampled:3", "sampled:4"),
}

_KSR_SLOT = {
    Variant.KSR_KEYWORD: ("translate_kw", "keyword"),
    Variant.KSR_TOPIC: ("translate_topic", "topic"),
    Variant.KSR_DEMO: ("translate_demo", "demo"),
}


def expected_slots(variant: Variant) -> tuple[str, ...]:
    return _VARIANT_SLOTS[variant]


def script_sample(
    engine: TranslationEngine,
    mock: MockBackend,
    variant: Variant,
    sample: SourceSample,
    script: SampleScript,
) -> dict[str, str]:
    """Script every reply the engine will request; returns slot -> text."""
    cfg = engine.cfg
    json_path = cfg.json_mining or variant is Variant.MAPS_JSON_MINE

    if variant.mines_knowledge:
        if json_path:
            raw = (
                script.json_raw
                if script.json_raw is not None
                else knowledge_json(script.knowledge)
            )
            mock.script(engine.mining_prompt("json_mine", sample), raw)
        else:
            for template_id, reply in _mining_replies(script).items():
                mock.script(engine.mining_prompt(template_id, sample), reply)
        knowledge = _effective_knowledge(script, json_path)
    else:
        knowledge = KnowledgeSet()

    texts = {slot: script.text_for(sample, slot) for slot in expected_slots(variant)}

    def guided_prompt(template_id: str, slot: str) -> str:
        block = engine.knowledge_block(slot, knowledge) if slot != "base" else ""
        return engine.translation_prompt(template_id, sample, block)

    base_prompt = engine.translation_prompt("translate_base", sample)
    if variant is Variant.BASELINE:
        mock.script(base_prompt, texts["baseline"])
    elif variant is Variant.FIVE_SHOT:
        mock.script(engine.five_shot_prompt(sample), texts["baseline"])
    elif variant is Variant.RERANK:
        mock.script(base_prompt, texts["baseline"])
        for k, tag in enumerate(RERANK_SEED_TAGS, 1):
            mock.script(base_prompt, texts[f"sampled:{k}"], seed_tag=tag)
    elif variant is Variant.THREE_IN_ONE:
        mock.script(guided_prompt("translate_3in1", "3in1"), texts["3in1"])
    elif variant in (Variant.MAPS, Variant.MAPS_JSON_MINE, Variant.MAPS_PLUS):
        mock.script(base_prompt, texts["baseline"])
        mock.script(guided_prompt("translate_kw", "keyword"), texts["keyword"])
        mock.script(guided_prompt("translate_topic", "topic"), texts["topic"])
        mock.script(guided_prompt("translate_demo", "demo"), texts["demo"])
        if variant is Variant.MAPS_PLUS:
            mock.script(guided_prompt("translate_3in1", "3in1"), texts["3in1"])
    elif variant in (Variant.ABLATE_KEYWORD, Variant.ABLATE_TOPIC, Variant.ABLATE_DEMO):
        mock.script(base_prompt, texts["baseline"])
        kept = [s for s in ("keyword", "topic", "demo") if s in texts]
        for slot in kept:
            template_id = {"keyword": "translate_kw", "topic": "translate_topic", "demo": "translate_demo"}[slot]
            mock.script(guided_prompt(template_id, slot), texts[slot])
        mock.script(base_prompt, texts["sampled:1"], seed_tag=cfg.ablate_seed_tag)
    elif variant in _KSR_SLOT:
        template_id, slot = _KSR_SLOT[variant]
        prompt = guided_prompt(template_id, slot)
        for k, tag in enumerate(KSR_SEED_TAGS, 1):
            mock.script(prompt, texts[f"sampled:{k}"], seed_tag=tag)
    else:
        raise AssertionError(f"unhandled variant {variant}")

    if script.scq_reply is not None:
        pool = CandidatePool.assemble(
            sample.id,
            [
                Candidate(text, Provenance.decode(slot), GenParams(0.0, "x"))
                for slot, text in texts.items()
            ],
        )
        mock.script(
            compose_scq(engine.library, cfg.lang_pair, sample, pool), script.scq_reply
        )
    return texts


# ---------------------------------------------------------------------------
# The 20-sentence desk fixture: knowledge-guided candidates dominate, the
# winning slot rotates so utilization spreads over all four provenances.
# ---------------------------------------------------------------------------

DESK_REFERENCE = "abcdefghij"

# Candidate texts by share of reference characters (lex-overlap F1 in name).
TEXT_05 = "abcdezzzzz"
TEXT_03 = "abczzzzzzz"
TEXT_04 = "abcdzzzzzz"
TEXT_06 = "abcdefzzzz"
TEXT_07 = "abcdefgzzz"
TEXT_09 = "abcdefghiz"

DESK_WINNER_CYCLE = ("baseline", "keyword", "topic", "demo")


def desk_samples(n: int = 20) -> list[SourceSample]:
    return [
        SourceSample(id=str(i + 1), source=f"source sentence {i + 1}", reference=DESK_REFERENCE)
        for i in range(n)
    ]


def desk_script(i: int) -> SampleScript:
    """Per-sample script for the toy corpus; ``i`` is 0-based."""
    winner = DESK_WINNER_CYCLE[i % 4]
    slot_texts = {
        "baseline": TEXT_05,
        "sampled:1": TEXT_06,
        "sampled:2": TEXT_04,
        "sampled:3": TEXT_03,
        "3in1": TEXT_07,
    }
    for slot in ("keyword", "topic", "demo"):
        slot_texts[slot] = TEXT_09 if slot == winner else TEXT_03
    knowledge = KnowledgeSet(
        keywords=(KeywordPair(f"word{i + 1}", f"term{i + 1}"),),
        topics=(f"topic-{i + 1}",),
        demo=Demonstration(f"related sentence {i + 1}", f"translated sentence {i + 1}"),
    )
    return SampleScript(knowledge=knowledge, slot_texts=slot_texts)
