"""Annotated corpus loading, validation, and few-shot demonstration sampling.

The corpus file is standoff JSON: a closed set of entity type labels plus
sentences carrying character-offset gold mentions. Offsets are abstract
character units over the decoded (UTF-8) text, never bytes, so marker
insertion and span arithmetic stay encoding-independent.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError
from .markers import DEFAULT_MARKERS, MarkerConfig, insert_markers

logger = logging.getLogger(__name__)

# Rejection sentinel for stage-2 typing. Never a gold label and never part
# of final pipeline output.
OTHER = "OTHER"


@dataclass(frozen=True, order=True)
class Span:
    """Character span: start inclusive, end exclusive."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0 or self.end <= self.start:
            raise ValidationError(f"invalid span ({self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class Sentence:
    doc_id: str
    index: int
    text: str

    def __post_init__(self) -> None:
        if not self.text:
            raise ValidationError(f"sentence {self.key} has empty text")

    @property
    def key(self) -> tuple[str, int]:
        return (self.doc_id, self.index)


@dataclass(frozen=True)
class GoldMention:
    sentence: Sentence
    span: Span
    category: str


@dataclass(frozen=True)
class FewShotExample:
    """A (plain, marked) demonstration pair for one entity type.

    Invariant: stripping the markers from ``marked`` yields ``text``
    exactly.
    """

    text: str
    marked: str
    entity_type: str


def slice_text(sentence: Sentence, span: Span) -> str:
    """Exact substring of the sentence covered by ``span``."""
    if span.end > len(sentence.text):
        raise ValidationError(
            f"span ({span.start}, {span.end}) out of bounds for sentence "
            f"{sentence.key} of length {len(sentence.text)}"
        )
    return sentence.text[span.start : span.end]


@dataclass(frozen=True)
class Corpus:
    """Immutable, shareable view of one loaded corpus file."""

    entity_types: tuple[str, ...]
    sentences: tuple[Sentence, ...]
    mentions: tuple[GoldMention, ...]

    def mentions_for(self, sentence: Sentence) -> list[GoldMention]:
        return [m for m in self.mentions if m.sentence.key == sentence.key]

    def sentence_keys(self) -> set[tuple[str, int]]:
        return {s.key for s in self.sentences}


def load_corpus(path: str | Path) -> Corpus:
    """Load and validate a standoff JSON corpus file.

    Every mention must carry a type from the file's own ``entity_types``
    list and offsets inside its sentence; an optional ``surface`` field is
    cross-checked against the offsets as cheap corruption detection.
    Overlapping gold mentions are legal and loaded as-is.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"corpus file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON (line {exc.lineno}): {exc.msg}") from exc

    if not isinstance(raw, dict) or "entity_types" not in raw or "sentences" not in raw:
        raise ValidationError(f"{path}: expected an object with 'entity_types' and 'sentences'")

    entity_types = raw["entity_types"]
    if not isinstance(entity_types, list) or not entity_types:
        raise ValidationError(f"{path}: 'entity_types' must be a non-empty list")
    if len(set(entity_types)) != len(entity_types):
        raise ValidationError(f"{path}: duplicate entity type labels")
    for label in entity_types:
        if not isinstance(label, str) or not label:
            raise ValidationError(f"{path}: entity type labels must be non-empty strings")
        if label == OTHER:
            raise ValidationError(f"{path}: {OTHER!r} is reserved and cannot be a gold label")

    sentences: list[Sentence] = []
    mentions: list[GoldMention] = []
    seen_keys: set[tuple[str, int]] = set()
    for si, record in enumerate(raw["sentences"]):
        where = f"{path}: sentences[{si}]"
        try:
            sentence = Sentence(
                doc_id=record["doc_id"], index=record["index"], text=record["text"]
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"{where}: missing or malformed field ({exc})") from exc
        if sentence.key in seen_keys:
            raise ValidationError(f"{where}: duplicate sentence key {sentence.key}")
        seen_keys.add(sentence.key)
        sentences.append(sentence)

        for mi, m in enumerate(record.get("mentions", [])):
            mwhere = f"{where}.mentions[{mi}]"
            try:
                span = Span(int(m["start"]), int(m["end"]))
                category = m["type"]
            except (KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"{mwhere}: missing or malformed field ({exc})") from exc
            if category not in entity_types:
                raise ValidationError(f"{mwhere}: unknown type {category!r}")
            if span.end > len(sentence.text):
                raise ValidationError(
                    f"{mwhere}: span ({span.start}, {span.end}) out of bounds for "
                    f"sentence of length {len(sentence.text)}"
                )
            surface = m.get("surface")
            actual = sentence.text[span.start : span.end]
            if surface is not None and surface != actual:
                raise ValidationError(
                    f"{mwhere}: stored surface {surface!r} does not match text {actual!r}"
                )
            mentions.append(GoldMention(sentence=sentence, span=span, category=category))

    return Corpus(
        entity_types=tuple(entity_types),
        sentences=tuple(sentences),
        mentions=tuple(mentions),
    )


def sample_fewshot(
    corpus: Corpus,
    entity_type: str,
    n: int,
    seed: int,
    cfg: MarkerConfig = DEFAULT_MARKERS,
    exclude: tuple[str, int] | None = None,
) -> list[FewShotExample]:
    """Sample ``n`` marked demonstrations for ``entity_type``.

    Eligible sentences hold at least one gold mention of the type and can
    be marker-encoded (no marker collision, no overlapping mentions of the
    type). ``exclude`` drops one sentence key from the pool so a query
    sentence never demonstrates itself. Pure function of its arguments.
    """
    if entity_type not in corpus.entity_types:
        raise ValidationError(f"unknown entity type {entity_type!r}")
    if n < 0:
        raise ValidationError("n must be >= 0")
    if n == 0:
        return []

    pool: list[tuple[Sentence, str]] = []
    for sentence in corpus.sentences:
        if exclude is not None and sentence.key == exclude:
            continue
        spans = [
            (m.span.start, m.span.end)
            for m in corpus.mentions
            if m.sentence.key == sentence.key and m.category == entity_type
        ]
        if not spans:
            continue
        try:
            marked = insert_markers(sentence.text, spans, cfg)
        except ValidationError:
            logger.warning(
                "sentence %s skipped from few-shot pool (not marker-encodable)", sentence.key
            )
            continue
        pool.append((sentence, marked))

    if len(pool) < n:
        raise ValidationError(
            f"need {n} few-shot sentences with a {entity_type!r} mention, "
            f"only {len(pool)} available"
        )
    rng = random.Random(seed)
    chosen = rng.sample(pool, n)
    return [
        FewShotExample(text=s.text, marked=marked, entity_type=entity_type)
        for s, marked in chosen
    ]
