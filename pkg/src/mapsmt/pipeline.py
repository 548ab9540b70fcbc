"""The three-stage translation engine and every comparative variant.

Stage one mines keywords, topics, and a related demonstration from the
source sentence; stage two generates one candidate per knowledge aspect
plus an unguided baseline; stage three selects the best candidate. The
comparative variants (rerank, five-shot, three-in-one, ablations,
knowledge-specific rerank) reuse the same machinery with different pool
recipes.

Independent sub-calls of a stage may run concurrently; pools are always
assembled by canonical slot, so serial and parallel execution produce
identical records apart from timings.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, TypeVar

from .core import (
    Candidate,
    CandidatePool,
    GenParams,
    KnowledgeSet,
    LangPair,
    MapsError,
    Provenance,
    RunRecord,
    SourceSample,
    Variant,
)
from .gateway import CompletionRequest, LlmGateway
from .promptkit import (
    InvalidJson,
    PromptLibrary,
    format_demo,
    format_keywords,
    format_three_in_one,
    format_topics,
    lang_display_name,
    parse_demo,
    parse_json_knowledge,
    parse_keywords,
    parse_topics,
)
from .selectors import Selector, SelectorSpec, make_selector

T = TypeVar("T")


class MissingFiveShotPool(MapsError):
    """The five-shot variant was requested without an exemplar pool."""


class AllSamplesFailed(MapsError):
    """Every sample in a run failed; nothing useful was produced."""


@dataclass(frozen=True)
class ExecMode:
    """Serial execution, or parallel fan-out bounded by ``max_concurrency``."""

    max_concurrency: int = 1

    def __post_init__(self) -> None:
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")

    @classmethod
    def serial(cls) -> "ExecMode":
        return cls(1)

    @classmethod
    def parallel(cls, max_concurrency: int) -> "ExecMode":
        if max_concurrency < 2:
            raise ValueError("parallel mode needs max_concurrency >= 2")
        return cls(max_concurrency)

    @property
    def is_parallel(self) -> bool:
        return self.max_concurrency > 1


@dataclass(frozen=True)
class Temperatures:
    deterministic: float = 0.0
    sampling: float = 0.3

    def __post_init__(self) -> None:
        if self.sampling <= 0:
            raise ValueError("sampling temperature must be positive")


@dataclass(frozen=True)
class PipelineConfig:
    lang_pair: LangPair
    backend_id: str
    selector: SelectorSpec
    exec_mode: ExecMode = ExecMode.serial()
    temperatures: Temperatures = Temperatures()
    five_shot_pool: Optional[Path] = None
    json_mining: bool = False
    max_tokens: int = 512
    ablate_seed_tag: str = "ablate"


@dataclass(frozen=True)
class MineDiagnostics:
    json_error: bool = False
    notes: tuple[str, ...] = ()


@dataclass
class _PoolBuild:
    knowledge: Optional[KnowledgeSet]
    pool: CandidatePool
    timings: dict[str, float] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


RERANK_SEED_TAGS = ("s1", "s2", "s3")
KSR_SEED_TAGS = ("s1", "s2", "s3", "s4")

_ABLATED_SLOT = {
    Variant.ABLATE_KEYWORD: "keyword",
    Variant.ABLATE_TOPIC: "topic",
    Variant.ABLATE_DEMO: "demo",
}

_KSR_TEMPLATE = {
    Variant.KSR_KEYWORD: "translate_kw",
    Variant.KSR_TOPIC: "translate_topic",
    Variant.KSR_DEMO: "translate_demo",
}


def load_five_shot_pool(path: Path) -> list[tuple[str, str]]:
    """Read the exemplar pool file: JSON lines of {"source", "target"}."""
    if not path.exists():
        raise MissingFiveShotPool(f"five-shot pool file not found: {path}")
    exemplars: list[tuple[str, str]] = []
    with path.open(encoding="utf-8") as fp:
        for line in fp:
            if line.strip():
                row = json.loads(line)
                exemplars.append((row["source"], row["target"]))
    if len(exemplars) < 5:
        raise MissingFiveShotPool(f"five-shot pool needs >= 5 exemplars, has {len(exemplars)}")
    return exemplars[:5]


class TranslationEngine:
    """Runs one variant over samples against a configured backend."""

    def __init__(
        self,
        gateway: LlmGateway,
        library: PromptLibrary,
        cfg: PipelineConfig,
        selector: Optional[Selector] = None,
    ) -> None:
        self.gateway = gateway
        self.library = library
        self.cfg = cfg
        self.selector = selector or make_selector(
            cfg.selector,
            lang_pair=cfg.lang_pair,
            gateway=gateway,
            library=library,
            backend_id=cfg.backend_id,
        )

    # -- prompt construction -------------------------------------------------

    def _lang_vars(self) -> dict[str, str]:
        return {
            "src_lang": lang_display_name(self.cfg.lang_pair.src),
            "tgt_lang": lang_display_name(self.cfg.lang_pair.tgt),
        }

    def mining_prompt(self, template_id: str, sample: SourceSample) -> str:
        return self.library.render(
            template_id,
            {
                **self._lang_vars(),
                "source": sample.source,
                "exemplars": self.library.exemplars(template_id, self.cfg.lang_pair),
            },
        )

    def translation_prompt(
        self, template_id: str, sample: SourceSample, knowledge_block: str = ""
    ) -> str:
        vars = {**self._lang_vars(), "source": sample.source}
        if "{knowledge}" in self.library.template(template_id).body:
            vars["knowledge"] = knowledge_block
        return self.library.render(template_id, vars)

    def five_shot_prompt(self, sample: SourceSample) -> str:
        if self.cfg.five_shot_pool is None:
            raise MissingFiveShotPool("config has no five-shot exemplar pool")
        src_lang = lang_display_name(self.cfg.lang_pair.src)
        tgt_lang = lang_display_name(self.cfg.lang_pair.tgt)
        exemplars = "".join(
            f"{src_lang}: {src}\n{tgt_lang}: {tgt}\n\n"
            for src, tgt in load_five_shot_pool(self.cfg.five_shot_pool)
        )
        return self.library.render(
            "translate_5shot",
            {**self._lang_vars(), "source": sample.source, "exemplars": exemplars},
        )

    def knowledge_block(self, slot: str, knowledge: KnowledgeSet) -> str:
        if slot == "keyword":
            return format_keywords(knowledge.keywords)
        if slot == "topic":
            return format_topics(knowledge.topics)
        if slot == "demo":
            return format_demo(knowledge.demo)
        if slot == "3in1":
            return format_three_in_one(knowledge)
        raise ValueError(f"unknown knowledge slot {slot!r}")

    # -- completions ---------------------------------------------------------

    def _complete(self, user: str, *, temperature: float, seed_tag: str = "") -> str:
        return self.gateway.complete(
            CompletionRequest(
                backend_id=self.cfg.backend_id,
                user=user,
                temperature=temperature,
                max_tokens=self.cfg.max_tokens,
                seed_tag=seed_tag,
            )
        ).text

    def _fan_out(self, jobs: Sequence[Callable[[], T]]) -> list[T]:
        """Run independent sub-calls, results in submission (slot) order."""
        if not self.cfg.exec_mode.is_parallel or len(jobs) <= 1:
            return [job() for job in jobs]
        workers = min(len(jobs), self.cfg.exec_mode.max_concurrency)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(job) for job in jobs]
            return [f.result() for f in futures]

    # -- stage 1: knowledge mining -------------------------------------------

    def mine_knowledge(
        self, sample: SourceSample
    ) -> tuple[KnowledgeSet, MineDiagnostics]:
        if self.cfg.json_mining:
            return self._mine_json(sample)
        return self._mine_three_call(sample)

    def _mine_three_call(
        self, sample: SourceSample
    ) -> tuple[KnowledgeSet, MineDiagnostics]:
        temp = self.cfg.temperatures.deterministic
        raw_kw, raw_topic, raw_demo = self._fan_out(
            [
                lambda: self._complete(self.mining_prompt("kw_mine", sample), temperature=temp),
                lambda: self._complete(self.mining_prompt("topic_mine", sample), temperature=temp),
                lambda: self._complete(self.mining_prompt("demo_mine", sample), temperature=temp),
            ]
        )
        notes: list[str] = []
        keywords, kw_diags = parse_keywords(raw_kw)
        notes.extend(f"keywords: {d}" for d in kw_diags)
        topics = parse_topics(raw_topic)
        demo, demo_diags = parse_demo(raw_demo)
        notes.extend(f"demo: {d}" for d in demo_diags)
        knowledge = KnowledgeSet(tuple(keywords), tuple(topics), demo)
        return knowledge, MineDiagnostics(notes=tuple(notes))

    def _mine_json(self, sample: SourceSample) -> tuple[KnowledgeSet, MineDiagnostics]:
        raw = self._complete(
            self.mining_prompt("json_mine", sample),
            temperature=self.cfg.temperatures.deterministic,
        )
        try:
            parsed = parse_json_knowledge(raw)
        except InvalidJson as exc:
            # Recorded, not retried: the JSON-error rate must stay honest.
            return KnowledgeSet(), MineDiagnostics(
                json_error=True, notes=(f"json: {exc.diagnostic}",)
            )
        return parsed.knowledge, MineDiagnostics(notes=tuple(parsed.diagnostics))

    # -- stage 2: knowledge integration ---------------------------------------

    def _guided_job(
        self,
        sample: SourceSample,
        template_id: str,
        provenance: Provenance,
        knowledge_block: str,
        *,
        temperature: float,
        seed_tag: str = "",
    ) -> Callable[[], Candidate]:
        prompt = self.translation_prompt(template_id, sample, knowledge_block)

        def job() -> Candidate:
            text = self._complete(prompt, temperature=temperature, seed_tag=seed_tag)
            return Candidate(text, provenance, GenParams(temperature, template_id))

        return job

    def integrate(self, sample: SourceSample, knowledge: KnowledgeSet) -> CandidatePool:
        """Generate the four-candidate pool: baseline plus three guided slots.

        Empty knowledge aspects still produce their slot (with an empty
        knowledge block) so pool-size laws hold for every input.
        """
        temp = self.cfg.temperatures.deterministic
        jobs = [
            self._guided_job(sample, "translate_base", Provenance.baseline(), "", temperature=temp),
            self._guided_job(
                sample,
                "translate_kw",
                Provenance.keyword(),
                self.knowledge_block("keyword", knowledge),
                temperature=temp,
            ),
            self._guided_job(
                sample,
                "translate_topic",
                Provenance.topic(),
                self.knowledge_block("topic", knowledge),
                temperature=temp,
            ),
            self._guided_job(
                sample,
                "translate_demo",
                Provenance.demo(),
                self.knowledge_block("demo", knowledge),
                temperature=temp,
            ),
        ]
        return CandidatePool.assemble(sample.id, self._fan_out(jobs))

    # -- pool construction per variant ----------------------------------------

    def build_pool(self, variant: Variant, sample: SourceSample) -> _PoolBuild:
        timings: dict[str, float] = {}
        meta: dict = {}
        knowledge: Optional[KnowledgeSet] = None

        if variant.mines_knowledge:
            t0 = time.perf_counter()
            engine = self
            if variant is Variant.MAPS_JSON_MINE and not self.cfg.json_mining:
                engine = TranslationEngine(
                    self.gateway,
                    self.library,
                    replace(self.cfg, json_mining=True),
                    selector=self.selector,
                )
            knowledge, diags = engine.mine_knowledge(sample)
            timings["mine"] = (time.perf_counter() - t0) * 1000.0
            if self.cfg.json_mining or variant is Variant.MAPS_JSON_MINE:
                meta["json_error"] = diags.json_error
            if diags.notes:
                meta["mine_diagnostics"] = list(diags.notes)

        t0 = time.perf_counter()
        pool = self._generate_pool(variant, sample, knowledge)
        timings["integrate"] = (time.perf_counter() - t0) * 1000.0
        return _PoolBuild(knowledge, pool, timings, meta)

    def _generate_pool(
        self, variant: Variant, sample: SourceSample, knowledge: Optional[KnowledgeSet]
    ) -> CandidatePool:
        temp0 = self.cfg.temperatures.deterministic
        temp_s = self.cfg.temperatures.sampling

        if variant is Variant.BASELINE:
            jobs = [
                self._guided_job(
                    sample, "translate_base", Provenance.baseline(), "", temperature=temp0
                )
            ]
        elif variant is Variant.FIVE_SHOT:
            prompt = self.five_shot_prompt(sample)

            def five_shot_job() -> Candidate:
                text = self._complete(prompt, temperature=temp0)
                return Candidate(
                    text, Provenance.baseline(), GenParams(temp0, "translate_5shot")
                )

            jobs = [five_shot_job]
        elif variant is Variant.RERANK:
            jobs = [
                self._guided_job(
                    sample, "translate_base", Provenance.baseline(), "", temperature=temp0
                )
            ] + [
                self._guided_job(
                    sample,
                    "translate_base",
                    Provenance.sampled(k),
                    "",
                    temperature=temp_s,
                    seed_tag=tag,
                )
                for k, tag in enumerate(RERANK_SEED_TAGS, 1)
            ]
        elif variant is Variant.THREE_IN_ONE:
            assert knowledge is not None
            jobs = [
                self._guided_job(
                    sample,
                    "translate_3in1",
                    Provenance.three_in_one(),
                    self.knowledge_block("3in1", knowledge),
                    temperature=temp0,
                )
            ]
        elif variant in (Variant.MAPS, Variant.MAPS_JSON_MINE):
            assert knowledge is not None
            return self.integrate(sample, knowledge)
        elif variant is Variant.MAPS_PLUS:
            assert knowledge is not None
            jobs = self._maps_jobs(sample, knowledge) + [
                self._guided_job(
                    sample,
                    "translate_3in1",
                    Provenance.three_in_one(),
                    self.knowledge_block("3in1", knowledge),
                    temperature=temp0,
                )
            ]
        elif variant in _ABLATED_SLOT:
            assert knowledge is not None
            ablated = _ABLATED_SLOT[variant]
            jobs = [
                job
                for slot, job in zip(
                    ("baseline", "keyword", "topic", "demo"),
                    self._maps_jobs(sample, knowledge),
                )
                if slot != ablated
            ]
            jobs.append(
                self._guided_job(
                    sample,
                    "translate_base",
                    Provenance.sampled(1),
                    "",
                    temperature=temp_s,
                    seed_tag=self.cfg.ablate_seed_tag,
                )
            )
        elif variant in _KSR_TEMPLATE:
            assert knowledge is not None
            template_id = _KSR_TEMPLATE[variant]
            slot = {"translate_kw": "keyword", "translate_topic": "topic", "translate_demo": "demo"}[
                template_id
            ]
            block = self.knowledge_block(slot, knowledge)
            jobs = [
                self._guided_job(
                    sample,
                    template_id,
                    Provenance.sampled(k),
                    block,
                    temperature=temp_s,
                    seed_tag=tag,
                )
                for k, tag in enumerate(KSR_SEED_TAGS, 1)
            ]
        else:
            raise ValueError(f"unhandled variant {variant}")

        return CandidatePool.assemble(sample.id, self._fan_out(jobs))

    def _maps_jobs(
        self, sample: SourceSample, knowledge: KnowledgeSet
    ) -> list[Callable[[], Candidate]]:
        temp = self.cfg.temperatures.deterministic
        return [
            self._guided_job(sample, "translate_base", Provenance.baseline(), "", temperature=temp),
            self._guided_job(
                sample,
                "translate_kw",
                Provenance.keyword(),
                self.knowledge_block("keyword", knowledge),
                temperature=temp,
            ),
            self._guided_job(
                sample,
                "translate_topic",
                Provenance.topic(),
                self.knowledge_block("topic", knowledge),
                temperature=temp,
            ),
            self._guided_job(
                sample,
                "translate_demo",
                Provenance.demo(),
                self.knowledge_block("demo", knowledge),
                temperature=temp,
            ),
        ]

    # -- stage 3 + assembly ----------------------------------------------------

    def run_sample(self, variant: Variant, sample: SourceSample) -> RunRecord:
        if variant is Variant.FIVE_SHOT and self.cfg.five_shot_pool is None:
            raise MissingFiveShotPool("five-shot variant requires a configured pool")
        build = self.build_pool(variant, sample)
        t0 = time.perf_counter()
        selection = self.selector.select(build.pool, sample)
        build.timings["select"] = (time.perf_counter() - t0) * 1000.0
        return RunRecord(
            sample_id=sample.id,
            variant=variant,
            lang_pair=self.cfg.lang_pair,
            source=sample.source,
            reference=sample.reference,
            knowledge=build.knowledge,
            pool=build.pool,
            selection=selection,
            timings=build.timings,
            backend_meta={"backend_id": self.cfg.backend_id, **build.meta},
        )

    def run(
        self,
        variant: Variant,
        samples: Sequence[SourceSample],
        on_record: Optional[Callable[[RunRecord], None]] = None,
    ) -> list[RunRecord]:
        """Run every sample; per-sample failures are captured in the record.

        Raises :class:`AllSamplesFailed` only when no sample succeeds.
        """
        records: list[RunRecord] = []
        failures = 0
        for sample in samples:
            try:
                record = self.run_sample(variant, sample)
            except MapsError as exc:
                failures += 1
                record = RunRecord(
                    sample_id=sample.id,
                    variant=variant,
                    lang_pair=self.cfg.lang_pair,
                    source=sample.source,
                    reference=sample.reference,
                    knowledge=None,
                    pool=CandidatePool(sample.id, ()),
                    selection=None,
                    timings={},
                    backend_meta={"backend_id": self.cfg.backend_id},
                    error=f"{type(exc).__name__}: {exc}",
                )
            records.append(record)
            if on_record is not None:
                on_record(record)
        if samples and failures == len(samples):
            raise AllSamplesFailed(f"all {failures} samples failed; last: {records[-1].error}")
        return records
