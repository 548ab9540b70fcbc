from __future__ import annotations

import pytest

from mapsmt.core import LangPair, SelectorId
from mapsmt.gateway import LlmGateway, MockBackend
from mapsmt.pipeline import ExecMode, PipelineConfig, TranslationEngine
from mapsmt.promptkit import PromptLibrary
from mapsmt.selectors import SelectorSpec


@pytest.fixture(scope="session")
def library() -> PromptLibrary:
    return PromptLibrary.load()


@pytest.fixture
def en_zh() -> LangPair:
    return LangPair("en", "zh")


@pytest.fixture
def make_engine(library, en_zh):
    """Factory: a fresh mock backend + engine, defaults to lex selection."""

    def factory(
        *,
        selector: SelectorSpec | None = None,
        exec_mode: ExecMode | None = None,
        json_mining: bool = False,
        latency_s: float = 0.0,
        caching: bool = True,
        five_shot_pool=None,
        max_concurrency: int = 8,
    ) -> tuple[TranslationEngine, MockBackend]:
        mock = MockBackend(latency_s=latency_s)
        gateway = LlmGateway(
            {"mock": mock}, caching=caching, max_concurrency=max_concurrency
        )
        cfg = PipelineConfig(
            lang_pair=en_zh,
            backend_id="mock",
            selector=selector or SelectorSpec(SelectorId.LEX_OVERLAP),
            exec_mode=exec_mode or ExecMode.serial(),
            json_mining=json_mining,
            five_shot_pool=five_shot_pool,
        )
        return TranslationEngine(gateway, library, cfg), mock

    return factory
