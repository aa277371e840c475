from __future__ import annotations

import random

import pytest

from conftest import make_candidate, make_sentence
from markner.corpus import FewShotExample, Span
from markner.errors import MarkerCollisionError, ValidationError
from markner.llm_gateway import LlmGateway, MockRule, mock_provider
from markner.span_extraction import (
    default_span_template,
    encode_marked,
    extract_spans_for_type,
    merge_candidates,
    parse_marked,
    render_span_prompt,
)

SENTENCE = (
    "A common feature of these proteins is involvement with heterochromatin "
    "and/or transcriptional repression"
)
MARKED = (
    "A common feature of these @@proteins## is involvement with heterochromatin "
    "and/or transcriptional repression"
)


class TestEncodeMarked:
    def test_worked_example(self):
        assert encode_marked(SENTENCE, [Span(26, 34)]) == MARKED

    def test_identity_without_spans(self):
        assert encode_marked(SENTENCE, []) == SENTENCE

    def test_collision_refused(self):
        with pytest.raises(MarkerCollisionError):
            encode_marked("already @@marked## text", [Span(0, 7)])


class TestParseMarked:
    def test_worked_example_inverse(self):
        assert parse_marked(MARKED, SENTENCE) == [Span(26, 34)]

    def test_unmarked_output_yields_nothing(self):
        assert parse_marked(SENTENCE, SENTENCE) == []

    def test_drifted_output_uses_substring_fallback(self):
        drifted = MARKED.replace("these", "those")
        assert parse_marked(drifted, SENTENCE) == [Span(26, 34)]

    def test_unbalanced_marker_warns_and_recovers_nothing(self):
        warnings: list[str] = []
        assert parse_marked("broken @@tail", "broken tail", warnings=warnings) == []
        assert len(warnings) == 1

    def test_partial_recovery_around_malformed_region(self):
        warnings: list[str] = []
        out = parse_marked("@@p53## binds @@DNA", "p53 binds DNA", warnings=warnings)
        assert out == [Span(0, 3)]
        assert len(warnings) == 1

    def test_never_out_of_bounds(self):
        rng = random.Random(7)
        original = "alpha beta gamma"
        for _ in range(200):
            noise = "".join(
                rng.choice(["@@", "##", "alpha ", "beta", " gamma", "x", " "])
                for _ in range(rng.randint(0, 12))
            )
            for span in parse_marked(noise, original):
                assert 0 <= span.start < span.end <= len(original)

    def test_round_trip_random_spans(self):
        rng = random.Random(99)
        words = ["p53", "binds", "zinc", "in", "the", "nucleus", "today"]
        for _ in range(300):
            text = " ".join(rng.choice(words) for _ in range(rng.randint(1, 10)))
            spans = []
            cursor = 0
            while cursor < len(text) and len(spans) < 3:
                start = rng.randint(cursor, len(text) - 1) if cursor < len(text) else cursor
                end = min(len(text), start + rng.randint(1, 6))
                if start < end:
                    spans.append(Span(start, end))
                cursor = end + 1
            assert parse_marked(encode_marked(text, spans), text) == sorted(spans)


class TestRenderSpanPrompt:
    def test_zero_shot_contains_instruction_and_sentence(self):
        sentence = make_sentence("p53 binds DNA")
        prompt = render_span_prompt(sentence, "Gene/Protein", [], default_span_template())
        body = prompt.messages[-1][1]
        assert body.count("p53 binds DNA") == 1
        assert 'type "Gene/Protein"' in body
        assert "Input:" not in body

    def test_one_example_precedes_sentence(self):
        sentence = make_sentence("zinc is here")
        example = FewShotExample(text=SENTENCE, marked=MARKED, entity_type="Chemical")
        prompt = render_span_prompt(sentence, "Chemical", [example], default_span_template())
        body = prompt.messages[-1][1]
        assert f"Input: {SENTENCE}\nOutput: {MARKED}" in body
        assert body.index("Input:") < body.index("Sentence: zinc is here")

    def test_deterministic(self):
        sentence = make_sentence("zinc is here")
        example = FewShotExample(text=SENTENCE, marked=MARKED, entity_type="Chemical")
        a = render_span_prompt(sentence, "Chemical", [example], default_span_template())
        b = render_span_prompt(sentence, "Chemical", [example], default_span_template())
        assert a == b

    def test_mismatched_example_type_rejected(self):
        sentence = make_sentence("zinc is here")
        example = FewShotExample(text=SENTENCE, marked=MARKED, entity_type="Chemical")
        with pytest.raises(ValidationError):
            render_span_prompt(sentence, "Species", [example], default_span_template())


class TestExtractSpansForType:
    def gateway_for(self, response: str) -> LlmGateway:
        return LlmGateway(
            provider=mock_provider([MockRule(response=response, contains=None)])
        )

    def test_marked_echo_yields_candidate(self):
        sentence = make_sentence(SENTENCE)
        candidates = extract_spans_for_type(
            sentence,
            "Gene/Protein",
            self.gateway_for(MARKED),
            default_span_template(),
            [],
        )
        assert len(candidates) == 1
        cand = candidates[0]
        assert (cand.span.start, cand.span.end) == (26, 34)
        assert cand.surface == "proteins"
        assert cand.source_type == "Gene/Protein"

    def test_unmarked_echo_yields_nothing(self):
        sentence = make_sentence(SENTENCE)
        assert (
            extract_spans_for_type(
                sentence, "Chemical", self.gateway_for(SENTENCE), default_span_template(), []
            )
            == []
        )

    def test_unbalanced_output_warns(self):
        sentence = make_sentence(SENTENCE)
        warnings: list[str] = []
        out = extract_spans_for_type(
            sentence,
            "Species",
            self.gateway_for("@@" + SENTENCE),
            default_span_template(),
            [],
            warnings=warnings,
        )
        assert out == []
        assert warnings

    def test_surface_always_from_original_sentence(self):
        sentence = make_sentence("The tumor suppressor p53 binds DNA and regulates transcription.")
        drifted = "The tumor suppressor @@p53## binds DNA and controls transcription."
        [cand] = extract_spans_for_type(
            sentence, "Gene/Protein", self.gateway_for(drifted), default_span_template(), []
        )
        assert cand.surface == sentence.text[cand.span.start : cand.span.end] == "p53"


class TestMergeCandidates:
    def test_single_list_passthrough(self):
        s = make_sentence("p53 binds DNA")
        a = make_candidate(s, 0, 3, "Gene/Protein")
        assert merge_candidates([[a], []]) == [a]

    def test_identical_offsets_different_types_collapse(self):
        s = make_sentence("p53 binds DNA")
        gene = make_candidate(s, 0, 3, "Gene/Protein")
        chem = make_candidate(s, 0, 3, "Chemical")
        [merged] = merge_candidates([[gene], [chem]])
        assert merged.span == Span(0, 3)
        assert merged.source_type is None

    def test_disjoint_candidates_sorted(self):
        s = make_sentence("p53 binds DNA")
        gene = make_candidate(s, 0, 3, "Gene/Protein")
        chem = make_candidate(s, 10, 13, "Chemical")
        assert merge_candidates([[chem], [gene]]) == [gene, chem]

    def test_exact_duplicates_deduplicated(self):
        s = make_sentence("p53 binds DNA")
        a = make_candidate(s, 0, 3, "Gene/Protein")
        assert merge_candidates([[a], [a]]) == [a]

    def test_strictly_increasing_no_duplicate_offsets(self):
        s = make_sentence("abcdefghij")
        rng = random.Random(3)
        lists = []
        for etype in ("A", "B", "C"):
            cands = []
            for _ in range(5):
                start = rng.randint(0, 8)
                end = rng.randint(start + 1, 10)
                cands.append(make_candidate(s, start, end, etype))
            lists.append(cands)
        merged = merge_candidates(lists)
        offsets = [(c.span.start, c.span.end) for c in merged]
        assert offsets == sorted(set(offsets))

    def test_cross_sentence_merge_rejected(self):
        s1 = make_sentence("p53 binds DNA", index=0)
        s2 = make_sentence("p53 binds DNA", index=1)
        with pytest.raises(ValidationError):
            merge_candidates([[make_candidate(s1, 0, 3, "A")], [make_candidate(s2, 0, 3, "A")]])
