"""Prompt template registry backed by editable asset files.

Each template is one UTF-8 text file; the hand-written few-shot exemplars
for the knowledge-mining prompts live next to them as
``{template_id}.{src}-{tgt}.examples.txt`` and are plain assets, not code.
Rendering is pure placeholder substitution over a fixed placeholder
vocabulary, so literal braces (e.g. a JSON schema shown inside a prompt)
survive untouched.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional

from ..core import LangPair, MapsError

TEMPLATE_IDS = (
    "kw_mine",
    "topic_mine",
    "demo_mine",
    "json_mine",
    "translate_base",
    "translate_kw",
    "translate_topic",
    "translate_demo",
    "translate_3in1",
    "translate_5shot",
    "scq_select",
)

PLACEHOLDERS = ("src_lang", "tgt_lang", "source", "knowledge", "exemplars", "choices")

_PLACEHOLDER_RE = re.compile(r"\{(" + "|".join(PLACEHOLDERS) + r")\}")

# Display names used inside prompt text; unknown codes fall back to the code.
_LANG_NAMES = {
    "en": "English",
    "zh": "Chinese",
    "de": "German",
    "ja": "Japanese",
    "fr": "French",
    "cs": "Czech",
    "uk": "Ukrainian",
    "hr": "Croatian",
}


def lang_display_name(code: str) -> str:
    return _LANG_NAMES.get(code.lower(), code)


class UnknownTemplate(MapsError):
    pass


class UnboundPlaceholder(MapsError):
    def __init__(self, name: str) -> None:
        super().__init__(f"placeholder {{{name}}} is not bound")
        self.name = name


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str

    def placeholders(self) -> frozenset[str]:
        return frozenset(m.group(1) for m in _PLACEHOLDER_RE.finditer(self.body))

    def render(self, vars: Mapping[str, str]) -> str:
        """Substitute placeholders; byte-stable for equal inputs."""
        missing = self.placeholders() - set(vars)
        if missing:
            raise UnboundPlaceholder(sorted(missing)[0])
        return _PLACEHOLDER_RE.sub(lambda m: vars[m.group(1)], self.body)


def _default_asset_dir() -> Path:
    return Path(str(resources.files("mapsmt.promptkit") / "assets"))


class PromptLibrary:
    """All registered templates plus per-language-pair exemplar assets."""

    def __init__(self, templates: dict[str, PromptTemplate], asset_dir: Path) -> None:
        self._templates = templates
        self._asset_dir = asset_dir

    @classmethod
    def load(cls, asset_dir: Optional[str | Path] = None) -> "PromptLibrary":
        directory = Path(asset_dir) if asset_dir is not None else _default_asset_dir()
        templates: dict[str, PromptTemplate] = {}
        for template_id in TEMPLATE_IDS:
            path = directory / f"{template_id}.txt"
            if not path.exists():
                raise UnknownTemplate(f"template asset missing: {path}")
            templates[template_id] = PromptTemplate(template_id, path.read_text("utf-8"))
        return cls(templates, directory)

    def template(self, template_id: str) -> PromptTemplate:
        try:
            return self._templates[template_id]
        except KeyError:
            raise UnknownTemplate(f"no template registered under {template_id!r}") from None

    def render(self, template_id: str, vars: Mapping[str, str]) -> str:
        return self.template(template_id).render(vars)

    def exemplars(self, template_id: str, pair: LangPair) -> str:
        """Few-shot exemplar block for a template and direction, or ''."""
        path = self._asset_dir / f"{template_id}.{pair.src}-{pair.tgt}.examples.txt"
        if not path.exists():
            return ""
        content = path.read_text("utf-8").strip()
        return content + "\n\n" if content else ""
