"""Reflection-template library and the mode -> template correction table."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..core import FailureMode

TEMPLATES_SCHEMA = "retrospect-templates"


@dataclass(frozen=True)
class Template:
    id: int
    name: str
    cue: str
    pattern: str
    corrects: FailureMode | None = None
    harms: FailureMode | None = None

    def render(self, slots: dict[str, str]) -> str:
        return self.pattern.format(**slots)


@dataclass(frozen=True)
class TemplateLibrary:
    templates: tuple[Template, ...]

    def __post_init__(self):
        if len(self.templates) < 6:
            raise ValueError("a template library needs at least 6 templates")
        for i, t in enumerate(self.templates):
            if t.id != i:
                raise ValueError(f"template ids must be 0..K-1 in order; got {t.id} at {i}")
        covered = {t.corrects for t in self.templates if t.corrects is not None}
        missing = set(FailureMode) - {FailureMode.NONE} - covered
        if missing:
            raise ValueError(f"no corrective template for {sorted(m.value for m in missing)}")

    def __len__(self) -> int:
        return len(self.templates)

    def __getitem__(self, i: int) -> Template:
        return self.templates[i]

    def corrective_for(self, mode: FailureMode) -> Template:
        return next(t for t in self.templates if t.corrects == mode)

    def harmful(self) -> list[Template]:
        return [t for t in self.templates if t.harms is not None]

    def matching(self, text: str) -> list[Template]:
        """Templates whose cue phrase appears in ``text``."""
        return [t for t in self.templates if t.cue in text]

    @classmethod
    def from_dict(cls, payload: dict) -> "TemplateLibrary":
        items = []
        for t in payload["templates"]:
            items.append(
                Template(
                    id=t["id"],
                    name=t["name"],
                    cue=t["cue"],
                    pattern=t["pattern"],
                    corrects=FailureMode(t["corrects"]) if t.get("corrects") else None,
                    harms=FailureMode(t["harms"]) if t.get("harms") else None,
                )
            )
        return cls(tuple(items))

    @classmethod
    def load(cls, path: str | Path | None = None) -> "TemplateLibrary":
        if path is None:
            text = resources.files("retrospect").joinpath("data/templates.json").read_text(encoding="utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {
            "schema": TEMPLATES_SCHEMA,
            "version": 1,
            "templates": [
                {
                    "id": t.id,
                    "name": t.name,
                    "cue": t.cue,
                    "pattern": t.pattern,
                    "corrects": t.corrects.value if t.corrects else None,
                    "harms": t.harms.value if t.harms else None,
                }
                for t in self.templates
            ],
        }


_DEFAULT: TemplateLibrary | None = None


def default_library() -> TemplateLibrary:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = TemplateLibrary.load()
    return _DEFAULT
