"""Stage 2: assign each candidate span a final category.

Four strategies: passthrough (keep the extraction-time type), retype-gpt
(ask the model again, with an explicit option list), kg-vote (plurality
over retrieved dictionary neighbors), and kg-gpt (the retype prompt with
the neighbors rendered as numbered references). OTHER is the rejection
class throughout; entities typed OTHER never reach evaluation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from .corpus import OTHER
from .errors import ValidationError
from .knowledge_base import (
    DEFAULT_K,
    EmbeddingProvider,
    KbIndex,
    Neighbor,
    retrieve_top_k,
)
from .llm_gateway import CompletionRequest, LlmGateway, Prompt, RequestOptions
from .span_extraction import CandidateSpan
from .templates import TextTemplate, builtin_template

logger = logging.getLogger(__name__)

STRATEGIES = ("passthrough", "retype-gpt", "kg-vote", "kg-gpt")

RETYPE_PLACEHOLDERS = ("sentence", "entity", "options")
KNOWLEDGE_PLACEHOLDERS = ("sentence", "entity", "options", "references")

# The literal rejection option offered to the model, mapped to OTHER.
OTHER_OPTION = "other"


def default_retype_template() -> TextTemplate:
    return builtin_template("retype", RETYPE_PLACEHOLDERS)


def default_knowledge_template() -> TextTemplate:
    return builtin_template("knowledge", KNOWLEDGE_PLACEHOLDERS)


@dataclass(frozen=True)
class KnowledgeContext:
    """Top-k neighbors for one query surface, in retrieval order."""

    query_surface: str
    neighbors: tuple[Neighbor, ...]


@dataclass(frozen=True)
class TypedEntity:
    candidate: CandidateSpan
    predicted: str  # an entity type label or OTHER
    strategy: str


class CategoryMap:
    """Total mapping from KB-native category strings to entity types.

    Categories absent from the mapping resolve to OTHER: the dictionary's
    label space is finer-grained than the task's, and unmapped labels are
    rejections by definition.
    """

    def __init__(self, mapping: dict[str, str], entity_types: tuple[str, ...] | None = None):
        if entity_types is not None:
            allowed = set(entity_types) | {OTHER}
            for category, label in mapping.items():
                if label not in allowed:
                    raise ValidationError(
                        f"category map sends {category!r} to unknown label {label!r}"
                    )
        self.mapping = dict(mapping)

    def map(self, category: str) -> str:
        return self.mapping.get(category, OTHER)

    @classmethod
    def load(cls, path: str | Path, entity_types: tuple[str, ...] | None = None) -> "CategoryMap":
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"category map not found: {path}")
        mapping: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2 or not parts[0] or not parts[1]:
                    raise ValidationError(f"{path}:{lineno}: expected kb_category<TAB>entity_type")
                mapping[parts[0]] = parts[1]
        return cls(mapping, entity_types)


def vote_type(ctx: KnowledgeContext, category_map: CategoryMap) -> str:
    """Plurality vote over the mapped neighbor categories.

    OTHER-mapped neighbors do not vote unless every neighbor maps to
    OTHER (then the answer is OTHER). Ties go to the label whose best
    supporting neighbor is ranked highest; ranks are unique, so the vote
    is fully deterministic and depends only on counts and ordering, never
    on the similarity scale.
    """
    if not ctx.neighbors:
        raise ValidationError("cannot vote on an empty knowledge context")
    counts: dict[str, int] = {}
    best_rank: dict[str, int] = {}
    for rank, neighbor in enumerate(ctx.neighbors):
        label = category_map.map(neighbor.entry.category)
        if label == OTHER:
            continue
        counts[label] = counts.get(label, 0) + 1
        best_rank.setdefault(label, rank)
    if not counts:
        return OTHER
    return min(counts, key=lambda label: (-counts[label], best_rank[label]))


def _options_line(allowed: list[str] | tuple[str, ...]) -> str:
    return ", ".join([*allowed, OTHER_OPTION])


def _references_block(ctx: KnowledgeContext) -> str:
    lines = [
        f"Reference{i}: ({n.entry.name}, {n.entry.category}, {n.similarity:.3f})"
        for i, n in enumerate(ctx.neighbors, start=1)
    ]
    return "\n".join(lines) + "\n\n" if lines else ""


def render_retype_prompt(
    sentence_text: str,
    candidate: CandidateSpan,
    allowed: list[str] | tuple[str, ...],
    template: TextTemplate | None = None,
) -> Prompt:
    """Category prompt listing every allowed label plus the 'other' option."""
    template = template or default_retype_template()
    body = template.render(
        sentence=sentence_text,
        entity=candidate.surface,
        options=_options_line(allowed),
    )
    return Prompt(messages=(("system", template.system_preamble), ("user", body)))


def render_knowledge_prompt(
    sentence_text: str,
    candidate: CandidateSpan,
    ctx: KnowledgeContext,
    allowed: list[str] | tuple[str, ...],
    template: TextTemplate | None = None,
) -> Prompt:
    """Retype prompt with retrieved neighbors as numbered reference lines."""
    template = template or default_knowledge_template()
    body = template.render(
        sentence=sentence_text,
        entity=candidate.surface,
        options=_options_line(allowed),
        references=_references_block(ctx),
    )
    return Prompt(messages=(("system", template.system_preamble), ("user", body)))


def parse_type_response(text: str, allowed: list[str] | tuple[str, ...]) -> str:
    """First allowed label (or 'other') occurring in the response.

    Case-insensitive substring scan; at equal positions the longer label
    wins (so "Gene/Protein" beats a shorter overlapping label). No match
    at all resolves to OTHER with a warning.
    """
    lowered = text.lower()
    hits: list[tuple[int, int, str]] = []
    for label in [*allowed, OTHER_OPTION]:
        pos = lowered.find(label.lower())
        if pos >= 0:
            hits.append((pos, -len(label), label))
    if not hits:
        logger.warning("no category label found in response %r; treating as %s", text[:80], OTHER)
        return OTHER
    _, _, label = min(hits)
    return OTHER if label == OTHER_OPTION else label


def predict_type(
    strategy: str,
    sentence_text: str,
    candidate: CandidateSpan,
    *,
    allowed: list[str] | tuple[str, ...],
    gateway: LlmGateway | None = None,
    opts: RequestOptions = RequestOptions(),
    retype_template: TextTemplate | None = None,
    knowledge_template: TextTemplate | None = None,
    index: KbIndex | None = None,
    query_provider: EmbeddingProvider | None = None,
    category_map: CategoryMap | None = None,
    k: int = DEFAULT_K,
) -> TypedEntity:
    """Dispatch one candidate through the chosen typing strategy."""
    if strategy not in STRATEGIES:
        raise ValidationError(f"unknown strategy {strategy!r}")

    if strategy == "passthrough":
        if candidate.source_type is None:
            logger.warning(
                "passthrough candidate %r has no extraction type (span claimed by "
                "multiple types); rejecting as %s",
                candidate.surface,
                OTHER,
            )
            predicted = OTHER
        else:
            predicted = candidate.source_type
        return TypedEntity(candidate=candidate, predicted=predicted, strategy=strategy)

    if strategy == "retype-gpt":
        if gateway is None:
            raise ValidationError("retype-gpt requires a gateway")
        prompt = render_retype_prompt(sentence_text, candidate, allowed, retype_template)
        response = gateway.complete(CompletionRequest.build(prompt, opts))
        return TypedEntity(
            candidate=candidate,
            predicted=parse_type_response(response.text, allowed),
            strategy=strategy,
        )

    if index is None or category_map is None:
        raise ValidationError(f"{strategy} requires a knowledge-base index and category map")
    neighbors = retrieve_top_k(index, candidate.surface, k, query_provider)
    ctx = KnowledgeContext(query_surface=candidate.surface, neighbors=tuple(neighbors))

    if strategy == "kg-vote":
        return TypedEntity(
            candidate=candidate, predicted=vote_type(ctx, category_map), strategy=strategy
        )

    # kg-gpt
    if gateway is None:
        raise ValidationError("kg-gpt requires a gateway")
    prompt = render_knowledge_prompt(sentence_text, candidate, ctx, allowed, knowledge_template)
    response = gateway.complete(CompletionRequest.build(prompt, opts))
    return TypedEntity(
        candidate=candidate,
        predicted=parse_type_response(response.text, allowed),
        strategy=strategy,
    )


def filter_other(entities: list[TypedEntity]) -> list[TypedEntity]:
    """Drop every OTHER-labeled entity, preserving order. Idempotent."""
    return [e for e in entities if e.predicted != OTHER]
