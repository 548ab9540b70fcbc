"""Run-configuration documents shared by the CLI and the service.

A config is one JSON object describing the backend, selection method,
scorer URLs, and pipeline knobs::

    {
      "backend": {"id": "mock0", "kind": "mock", "fixture": "replies.json",
                  "latency_ms": 0}
               | {"id": "prod", "kind": "wire", "base_url": "https://...",
                  "model": "..."},
      "selector": "lex" | "scq" | "qe" | "oracle",
      "qe_url": "...", "oracle_url": "...",
      "cache_path": null, "max_concurrency": 8,
      "five_shot_pool": "pool.jsonl", "json_mining": false, "max_tokens": 512
    }

Relative paths resolve against the directory the config came from.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Mapping, Optional

from .core import LangPair, MapsError, SelectorId
from .gateway import Backend, LlmGateway, MockBackend, WireBackend
from .pipeline import ExecMode, PipelineConfig
from .selectors import SelectorSpec


class BadConfig(MapsError):
    pass


def _resolve(base_dir: Path, value: Optional[str]) -> Optional[Path]:
    if value is None:
        return None
    path = Path(value)
    return path if path.is_absolute() else base_dir / path


def build_backend(spec: Mapping[str, Any], base_dir: Path) -> tuple[str, Backend]:
    backend_id = spec.get("id", "default")
    kind = spec.get("kind")
    if kind == "mock":
        fixture = _resolve(base_dir, spec.get("fixture"))
        if fixture is None:
            raise BadConfig("mock backend needs a 'fixture' path")
        latency_s = float(spec.get("latency_ms", 0)) / 1000.0
        return backend_id, MockBackend.from_fixture_file(fixture, latency_s=latency_s)
    if kind == "wire":
        for field in ("base_url", "model"):
            if field not in spec:
                raise BadConfig(f"wire backend needs {field!r}")
        return backend_id, WireBackend(spec["base_url"], spec["model"])
    raise BadConfig(f"unknown backend kind {kind!r}")


def build_gateway(config: Mapping[str, Any], base_dir: Path) -> LlmGateway:
    backend_spec = config.get("backend")
    if not isinstance(backend_spec, Mapping):
        raise BadConfig("config needs a 'backend' object")
    backend_id, backend = build_backend(backend_spec, base_dir)
    return LlmGateway(
        {backend_id: backend},
        cache_path=_resolve(base_dir, config.get("cache_path")),
        max_concurrency=int(config.get("max_concurrency", 8)),
    )


def selector_spec(config: Mapping[str, Any], name: Optional[str] = None) -> SelectorSpec:
    kind_name = name or config.get("selector", "lex")
    try:
        kind = SelectorId(kind_name)
    except ValueError:
        raise BadConfig(f"unknown selector {kind_name!r}") from None
    if kind is SelectorId.QE_WIRE:
        url = config.get("qe_url")
        if not url:
            raise BadConfig("selector 'qe' needs qe_url in the config")
        return SelectorSpec(kind, url)
    if kind is SelectorId.ORACLE_WIRE:
        url = config.get("oracle_url")
        if not url:
            raise BadConfig("selector 'oracle' needs oracle_url in the config")
        return SelectorSpec(kind, url)
    return SelectorSpec(kind)


def build_pipeline_config(
    config: Mapping[str, Any],
    lang_pair: LangPair,
    base_dir: Path,
    *,
    selector_name: Optional[str] = None,
    exec_mode: Optional[ExecMode] = None,
) -> PipelineConfig:
    backend_spec = config.get("backend")
    if not isinstance(backend_spec, Mapping):
        raise BadConfig("config needs a 'backend' object")
    return PipelineConfig(
        lang_pair=lang_pair,
        backend_id=backend_spec.get("id", "default"),
        selector=selector_spec(config, selector_name),
        exec_mode=exec_mode or ExecMode.serial(),
        five_shot_pool=_resolve(base_dir, config.get("five_shot_pool")),
        json_mining=bool(config.get("json_mining", False)),
        max_tokens=int(config.get("max_tokens", 512)),
    )
