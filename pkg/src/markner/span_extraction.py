"""Stage 1: marker-based entity span extraction.

Renders one prompt per (sentence, entity type) asking the model to echo
the sentence with every entity of that type wrapped in markers, parses
the untrusted output back into character offsets of the *original*
sentence, and merges the per-type candidate lists.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .corpus import FewShotExample, Sentence, Span
from .errors import ValidationError
from .llm_gateway import CompletionRequest, LlmGateway, Prompt, RequestOptions
from .markers import (
    DEFAULT_MARKERS,
    MarkerConfig,
    align_fragments,
    insert_markers,
    split_marked,
)
from .templates import TextTemplate, builtin_template

SPAN_PLACEHOLDERS = ("entity_type", "examples", "input_sentence")


def default_span_template() -> TextTemplate:
    return builtin_template("span", SPAN_PLACEHOLDERS)


@dataclass(frozen=True)
class CandidateSpan:
    """A stage-1 span candidate, always expressed in original-sentence offsets.

    ``source_type`` is the entity type named in the prompt that produced
    the candidate; None means two types produced the identical span and
    stage 2 must decide.
    """

    doc_id: str
    sentence_index: int
    span: Span
    surface: str
    source_type: str | None

    @property
    def sentence_key(self) -> tuple[str, int]:
        return (self.doc_id, self.sentence_index)


def encode_marked(
    sentence_text: str,
    spans: list[Span] | tuple[Span, ...],
    cfg: MarkerConfig = DEFAULT_MARKERS,
) -> str:
    """Insert markers around each span; removing them restores the input."""
    return insert_markers(sentence_text, [(s.start, s.end) for s in spans], cfg)


def parse_marked(
    llm_output: str,
    original_sentence: str,
    cfg: MarkerConfig = DEFAULT_MARKERS,
    warnings: list[str] | None = None,
) -> list[Span]:
    """Recover spans of ``original_sentence`` from marker-annotated output.

    Never aborts: malformed marker regions are skipped with a warning. If
    the output, markers removed, reproduces the sentence exactly, offsets
    are positional; otherwise each marked fragment is located as the
    leftmost unconsumed substring of the original. Results are sorted by
    offsets and always in-bounds.
    """
    stripped, fragments = split_marked(llm_output, cfg, warnings)
    aligned = align_fragments(stripped, fragments, original_sentence, warnings)
    return [Span(start, end) for start, end in aligned]


def render_span_prompt(
    sentence: Sentence,
    entity_type: str,
    examples: list[FewShotExample],
    template: TextTemplate,
    cfg: MarkerConfig = DEFAULT_MARKERS,
) -> Prompt:
    """Deterministic extraction prompt for one (sentence, type) pair."""
    for ex in examples:
        if ex.entity_type != entity_type:
            raise ValidationError(
                f"few-shot example for {ex.entity_type!r} used in a {entity_type!r} prompt"
            )
    blocks = [f"Input: {ex.text}\nOutput: {ex.marked}" for ex in examples]
    examples_block = "\n\n".join(blocks)
    if examples_block:
        examples_block += "\n\n"
    body = template.render(
        entity_type=entity_type,
        examples=examples_block,
        input_sentence=sentence.text,
    )
    return Prompt(messages=(("system", template.system_preamble), ("user", body)))


def extract_spans_for_type(
    sentence: Sentence,
    entity_type: str,
    gateway: LlmGateway,
    template: TextTemplate,
    examples: list[FewShotExample],
    opts: RequestOptions = RequestOptions(),
    cfg: MarkerConfig = DEFAULT_MARKERS,
    warnings: list[str] | None = None,
) -> list[CandidateSpan]:
    """render -> complete -> parse for one entity type; duplicates removed."""
    prompt = render_span_prompt(sentence, entity_type, examples, template, cfg)
    response = gateway.complete(CompletionRequest.build(prompt, opts))
    spans = parse_marked(response.text, sentence.text, cfg, warnings)
    seen: set[Span] = set()
    out: list[CandidateSpan] = []
    for span in spans:
        if span in seen:
            continue
        seen.add(span)
        out.append(
            CandidateSpan(
                doc_id=sentence.doc_id,
                sentence_index=sentence.index,
                span=span,
                surface=sentence.text[span.start : span.end],
                source_type=entity_type,
            )
        )
    return out


def merge_candidates(per_type_lists: list[list[CandidateSpan]]) -> list[CandidateSpan]:
    """Union of per-type candidate lists for one sentence.

    Exact duplicates collapse; identical offsets claimed by different
    types collapse to a single candidate with ``source_type`` cleared so
    stage 2 decides. Output is strictly ordered by (start, end) and holds
    no duplicate offset pairs.
    """
    keys = {c.sentence_key for lst in per_type_lists for c in lst}
    if len(keys) > 1:
        raise ValidationError(f"merge_candidates got candidates from {len(keys)} sentences")
    by_span: dict[Span, CandidateSpan] = {}
    for lst in per_type_lists:
        for cand in lst:
            held = by_span.get(cand.span)
            if held is None:
                by_span[cand.span] = cand
            elif held.source_type != cand.source_type:
                by_span[cand.span] = replace(held, source_type=None)
    return sorted(by_span.values(), key=lambda c: (c.span.start, c.span.end))
