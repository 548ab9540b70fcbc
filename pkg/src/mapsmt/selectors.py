"""Candidate selection: LLM single-choice question, wire-protocol quality
estimation, reference-based oracle scoring, and a deterministic
lexical-overlap scorer so the test suite needs no neural model.

Scoring selectors pick the argmax; ties break to the lowest canonical slot
index, so the baseline translation is only abandoned on a strict
improvement.
"""

from __future__ import annotations

import math
import time
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Sequence

import httpx

from .core import (
    CandidatePool,
    LangPair,
    MapsError,
    SelectionOutcome,
    SelectorId,
    SourceSample,
)
from .gateway import CompletionRequest, LlmGateway
from .promptkit import PromptLibrary, Unparseable, lang_display_name, parse_scq_answer


class ScorerUnavailable(MapsError):
    """The scorer service stayed unreachable after retries."""


class MalformedScorerReply(MapsError):
    """The scorer replied with something other than a finite numeric score."""


class MissingReference(MapsError):
    """Reference-based scoring was asked for a sample without a reference."""


class PoolTooSmall(MapsError):
    """A single-choice question needs at least two candidates."""


@dataclass(frozen=True)
class ScoreRequest:
    """One scoring call. ``reference`` is required for oracle scoring and
    must be absent for reference-free QE scoring."""

    src_lang: str
    tgt_lang: str
    source: str
    hypothesis: str
    reference: Optional[str] = None


@dataclass(frozen=True)
class SelectorSpec:
    """Which selection method to use; wire selectors carry their URL."""

    kind: SelectorId
    url: Optional[str] = None

    def __post_init__(self) -> None:
        needs_url = self.kind in (SelectorId.QE_WIRE, SelectorId.ORACLE_WIRE)
        if needs_url and not self.url:
            raise ValueError(f"{self.kind.value} selector requires a url")


def score_lex_overlap(req: ScoreRequest) -> float:
    """Character-multiset F1 between hypothesis and reference.

    Both strings are NFC-normalized first; the score is 1.0 exactly when
    the multisets match and 0.0 when they are disjoint.
    """
    if req.reference is None:
        raise MissingReference("lexical-overlap scoring requires a reference")
    hyp = Counter(unicodedata.normalize("NFC", req.hypothesis))
    ref = Counter(unicodedata.normalize("NFC", req.reference))
    if hyp == ref:
        return 1.0
    overlap = sum((hyp & ref).values())
    if overlap == 0:
        return 0.0
    precision = overlap / sum(hyp.values())
    recall = overlap / sum(ref.values())
    return 2.0 * precision * recall / (precision + recall)


class Scorer(Protocol):
    def score_many(self, reqs: Sequence[ScoreRequest]) -> list[float]: ...


class LexOverlapScorer:
    def score_many(self, reqs: Sequence[ScoreRequest]) -> list[float]:
        return [score_lex_overlap(r) for r in reqs]


BATCH_THRESHOLD = 8


class WireScorer:
    """Client for the scorer wire protocol.

    ``POST {url}/score`` scores one hypothesis; ``POST {url}/score_batch``
    is used once at least :data:`BATCH_THRESHOLD` requests are pending.
    A NaN, missing, or non-numeric score is a hard error: silently
    clamping would corrupt upper-bound analyses downstream.
    """

    def __init__(
        self,
        url: str,
        *,
        timeout_s: float = 60.0,
        max_retries: int = 3,
        backoff_base_s: float = 1.0,
        client: Optional[httpx.Client] = None,
    ) -> None:
        self.url = url.rstrip("/")
        self.max_retries = max_retries
        self.backoff_base_s = backoff_base_s
        self._client = client or httpx.Client(timeout=timeout_s)

    def _post(self, endpoint: str, body: dict) -> dict:
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_base_s * 2 ** (attempt - 1))
            try:
                resp = self._client.post(f"{self.url}{endpoint}", json=body)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last_error = ScorerUnavailable(f"HTTP {resp.status_code} from {endpoint}")
                continue
            if resp.status_code != 200:
                raise ScorerUnavailable(f"HTTP {resp.status_code} from {endpoint}")
            try:
                return resp.json()
            except ValueError as exc:
                raise MalformedScorerReply(f"non-JSON reply from {endpoint}") from exc
        raise ScorerUnavailable(f"scorer unreachable at {self.url}: {last_error}")

    @staticmethod
    def _request_body(req: ScoreRequest) -> dict:
        return {
            "src_lang": req.src_lang,
            "tgt_lang": req.tgt_lang,
            "source": req.source,
            "hypothesis": req.hypothesis,
            "reference": req.reference,
        }

    @staticmethod
    def _validate(value: object, context: str) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise MalformedScorerReply(f"{context}: score is not a number: {value!r}")
        score = float(value)
        if math.isnan(score) or math.isinf(score):
            raise MalformedScorerReply(f"{context}: score is not finite: {score!r}")
        return score

    def score(self, req: ScoreRequest) -> float:
        reply = self._post("/score", self._request_body(req))
        if "score" not in reply:
            raise MalformedScorerReply("reply object has no 'score' field")
        return self._validate(reply["score"], "/score")

    def score_many(self, reqs: Sequence[ScoreRequest]) -> list[float]:
        if len(reqs) < BATCH_THRESHOLD:
            return [self.score(r) for r in reqs]
        reply = self._post(
            "/score_batch", {"items": [self._request_body(r) for r in reqs]}
        )
        scores = reply.get("scores")
        if not isinstance(scores, list) or len(scores) != len(reqs):
            raise MalformedScorerReply("batch reply misaligned with request items")
        return [self._validate(s, "/score_batch") for s in scores]


def argmax_lowest_index(scores: Sequence[float]) -> int:
    """First index attaining the maximum; the pool tie-break rule."""
    best = max(scores)
    return scores.index(best)


def compose_scq(
    library: PromptLibrary,
    lang_pair: LangPair,
    sample: SourceSample,
    pool: CandidatePool,
) -> str:
    """Render the single-choice question over a pool, labels (A), (B), ..."""
    if len(pool) < 2:
        raise PoolTooSmall("a single-choice question needs at least two candidates")
    if len(pool) > 26:
        raise PoolTooSmall("at most 26 candidates can be labeled")
    choices = "\n".join(
        f"({chr(ord('A') + i)}) {c.text}" for i, c in enumerate(pool.candidates)
    )
    return library.render(
        "scq_select",
        {
            "src_lang": lang_display_name(lang_pair.src),
            "tgt_lang": lang_display_name(lang_pair.tgt),
            "source": sample.source,
            "choices": choices,
        },
    )


class Selector(Protocol):
    def select(self, pool: CandidatePool, sample: SourceSample) -> SelectionOutcome: ...


@dataclass
class ScoringSelector:
    """Selects the argmax of per-candidate scores from any scorer."""

    selector_id: SelectorId
    scorer: Scorer
    lang_pair: LangPair
    uses_reference: bool

    def select(self, pool: CandidatePool, sample: SourceSample) -> SelectionOutcome:
        if len(pool) == 1:
            return SelectionOutcome(0, None, self.selector_id)
        if self.uses_reference and sample.reference is None:
            raise MissingReference(
                f"selector {self.selector_id.value} needs references; sample "
                f"{sample.id!r} has none"
            )
        reference = sample.reference if self.uses_reference else None
        reqs = [
            ScoreRequest(
                src_lang=self.lang_pair.src,
                tgt_lang=self.lang_pair.tgt,
                source=sample.source,
                hypothesis=candidate.text,
                reference=reference,
            )
            for candidate in pool.candidates
        ]
        scores = self.scorer.score_many(reqs)
        return SelectionOutcome(
            selected_index=argmax_lowest_index(scores),
            scores=tuple(scores),
            selector=self.selector_id,
        )


@dataclass
class ScqSelector:
    """Asks the generating LLM to pick the best candidate by letter.

    An unparseable answer falls back to the baseline slot (slot 0 when the
    pool has no baseline candidate) and is noted on the outcome.
    """

    gateway: LlmGateway
    library: PromptLibrary
    backend_id: str
    lang_pair: LangPair
    max_tokens: int = 64

    def select(self, pool: CandidatePool, sample: SourceSample) -> SelectionOutcome:
        if len(pool) == 1:
            return SelectionOutcome(0, None, SelectorId.LLM_SCQ)
        prompt = compose_scq(self.library, self.lang_pair, sample, pool)
        completion = self.gateway.complete(
            CompletionRequest(
                backend_id=self.backend_id,
                user=prompt,
                temperature=0.0,
                max_tokens=self.max_tokens,
            )
        )
        try:
            index = parse_scq_answer(completion.text, len(pool))
        except Unparseable:
            fallback = pool.baseline_index()
            return SelectionOutcome(
                selected_index=0 if fallback is None else fallback,
                scores=None,
                selector=SelectorId.LLM_SCQ,
                note="unparseable answer; fell back to baseline slot",
            )
        return SelectionOutcome(index, None, SelectorId.LLM_SCQ)


def make_selector(
    spec: SelectorSpec,
    *,
    lang_pair: LangPair,
    gateway: Optional[LlmGateway] = None,
    library: Optional[PromptLibrary] = None,
    backend_id: Optional[str] = None,
    scorer_factory: Optional[Callable[[str], Scorer]] = None,
) -> Selector:
    """Build the selector a pipeline config asks for."""
    if spec.kind is SelectorId.LEX_OVERLAP:
        return ScoringSelector(spec.kind, LexOverlapScorer(), lang_pair, uses_reference=True)
    if spec.kind in (SelectorId.QE_WIRE, SelectorId.ORACLE_WIRE):
        assert spec.url is not None
        scorer = (scorer_factory or WireScorer)(spec.url)
        return ScoringSelector(
            spec.kind,
            scorer,
            lang_pair,
            uses_reference=spec.kind is SelectorId.ORACLE_WIRE,
        )
    if spec.kind is SelectorId.LLM_SCQ:
        if gateway is None or library is None or backend_id is None:
            raise ValueError("LLM-SCQ selection needs a gateway, library, and backend id")
        return ScqSelector(gateway, library, backend_id, lang_pair)
    raise ValueError(f"unknown selector kind: {spec.kind}")
