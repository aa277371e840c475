"""Plain-text prompt templates with `{placeholder}` slots.

Templates are swappable per run without code changes; the defaults under
``markner/templates/`` are deliberately simple built-ins. Validation is
strict at load time: each declared placeholder must appear exactly once,
and nothing else in the file may look like one of the declared slots.
Rendering is a single pass, so substituted values are never re-scanned
for placeholders.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import TemplateError

DEFAULT_SYSTEM_PREAMBLE = "You are an expert biomedical text annotator."


@dataclass(frozen=True)
class TextTemplate:
    body: str
    placeholders: tuple[str, ...]
    system_preamble: str = DEFAULT_SYSTEM_PREAMBLE

    def __post_init__(self) -> None:
        for name in self.placeholders:
            count = self.body.count("{" + name + "}")
            if count != 1:
                raise TemplateError(
                    f"template must contain {{{name}}} exactly once, found {count}"
                )

    def render(self, **values: str) -> str:
        missing = set(self.placeholders) - set(values)
        if missing:
            raise TemplateError(f"unbound placeholders: {sorted(missing)}")
        pattern = "|".join(re.escape("{" + name + "}") for name in self.placeholders)
        parts = re.split(f"({pattern})", self.body)
        out = []
        for part in parts:
            if part.startswith("{") and part.endswith("}") and part[1:-1] in values:
                out.append(values[part[1:-1]])
            else:
                out.append(part)
        return "".join(out)


def load_template(
    path: str | Path,
    placeholders: tuple[str, ...],
    system_preamble: str = DEFAULT_SYSTEM_PREAMBLE,
) -> TextTemplate:
    path = Path(path)
    if not path.exists():
        raise TemplateError(f"template file not found: {path}")
    return TextTemplate(
        body=path.read_text(encoding="utf-8"),
        placeholders=placeholders,
        system_preamble=system_preamble,
    )


def builtin_template(name: str, placeholders: tuple[str, ...]) -> TextTemplate:
    """Load one of the templates shipped inside the package."""
    body = resources.files("markner").joinpath("templates", f"{name}.txt").read_text("utf-8")
    return TextTemplate(body=body, placeholders=placeholders)
