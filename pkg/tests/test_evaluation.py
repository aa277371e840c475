from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_candidate, make_sentence
from markner.corpus import GoldMention, OTHER, Sentence, Span
from markner.errors import ValidationError
from markner.evaluation import (
    Counts,
    EvalResult,
    compute_prf,
    evaluate,
    f1_score,
    match_strict,
    render_report,
)
from markner.type_prediction import TypedEntity


def gold(sentence: Sentence, start: int, end: int, category: str) -> GoldMention:
    return GoldMention(sentence=sentence, span=Span(start, end), category=category)


def pred(sentence: Sentence, start: int, end: int, category: str) -> TypedEntity:
    return TypedEntity(
        candidate=make_candidate(sentence, start, end, None),
        predicted=category,
        strategy="kg-vote",
    )


def matching_oracle(gold_keys: list[tuple], pred_keys: list[tuple]) -> dict[str, Counts]:
    """Maximum bipartite matching via augmenting paths over equality edges."""
    match_of_pred: dict[int, int] = {}
    match_of_gold: dict[int, int] = {}

    def augment(p: int, visited: set[int]) -> bool:
        for g, gkey in enumerate(gold_keys):
            if gkey != pred_keys[p] or g in visited:
                continue
            visited.add(g)
            if g not in match_of_gold or augment(match_of_gold[g], visited):
                match_of_gold[g] = p
                match_of_pred[p] = g
                return True
        return False

    for p in range(len(pred_keys)):
        augment(p, set())

    types = {k[3] for k in gold_keys} | {k[3] for k in pred_keys}
    out = {}
    for t in types:
        tp = sum(1 for p, g in match_of_pred.items() if pred_keys[p][3] == t)
        n_pred = sum(1 for k in pred_keys if k[3] == t)
        n_gold = sum(1 for k in gold_keys if k[3] == t)
        out[t] = Counts(tp=tp, fp=n_pred - tp, fn=n_gold - tp)
    return out


class TestComputePrf:
    @pytest.mark.parametrize(
        "p,r,f",
        [
            (32.60, 59.05, 42.01),
            (86.02, 62.99, 72.72),
            (83.87, 61.41, 70.90),
            (6.71, 23.33, 10.42),
            (98.51, 73.83, 84.40),
        ],
    )
    def test_published_consistent_rows(self, p, r, f):
        assert f1_score(p, r) == pytest.approx(f, abs=0.01)

    def test_zero_counts(self):
        assert compute_prf(Counts(0, 0, 0)) == (0.0, 0.0, 0.0)
        assert compute_prf(Counts(0, 3, 2))[0] == 0.0

    def test_perfect(self):
        assert compute_prf(Counts(5, 0, 0)) == (100.0, 100.0, 100.0)

    def test_counts_to_percentages(self):
        p, r, f = compute_prf(Counts(tp=5, fp=1, fn=0))
        assert p == pytest.approx(100 * 5 / 6)
        assert r == 100.0
        assert f == pytest.approx(f1_score(p, r))

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
    def test_harmonic_bounds(self, tp, fp, fn):
        p, r, f = compute_prf(Counts(tp, fp, fn))
        assert 0 <= p <= 100 and 0 <= r <= 100
        if p > 0 and r > 0:
            assert min(p, r) - 1e-9 <= f <= max(p, r) + 1e-9
        else:
            assert f == 0.0


class TestMatchStrict:
    def test_identical_sets(self):
        s = make_sentence("p53 binds DNA")
        golds = [gold(s, 0, 3, "Gene/Protein"), gold(s, 10, 13, "Chemical")]
        preds = [pred(s, 0, 3, "Gene/Protein"), pred(s, 10, 13, "Chemical")]
        counts = match_strict(golds, preds)
        assert counts["Gene/Protein"] == Counts(1, 0, 0)
        assert counts["Chemical"] == Counts(1, 0, 0)

    def test_empty_predictions(self):
        s = make_sentence("p53 binds DNA")
        golds = [gold(s, 0, 3, "Gene/Protein")]
        assert match_strict(golds, [])["Gene/Protein"] == Counts(0, 0, 1)

    def test_wrong_type_is_fp_and_fn(self):
        s = make_sentence("p53 binds DNA")
        counts = match_strict([gold(s, 0, 3, "Gene/Protein")], [pred(s, 0, 3, "Chemical")])
        assert counts["Gene/Protein"] == Counts(0, 0, 1)
        assert counts["Chemical"] == Counts(0, 1, 0)

    def test_duplicate_correct_prediction_costs_fp(self):
        s = make_sentence("p53 binds DNA")
        golds = [gold(s, 0, 3, "Gene/Protein")]
        preds = [pred(s, 0, 3, "Gene/Protein"), pred(s, 0, 3, "Gene/Protein")]
        assert match_strict(golds, preds)["Gene/Protein"] == Counts(1, 1, 0)

    def test_other_rejected(self):
        s = make_sentence("p53 binds DNA")
        with pytest.raises(ValidationError, match="OTHER"):
            match_strict([], [pred(s, 0, 3, OTHER)])

    def test_unknown_sentence_rejected(self):
        s = make_sentence("p53 binds DNA")
        with pytest.raises(ValidationError, match="unknown sentence"):
            match_strict([], [pred(s, 0, 3, "Chemical")], known_sentences=set())

    def test_order_independence(self):
        rng = random.Random(8)
        s = make_sentence("abcdefghijklmno")
        preds = [
            pred(s, start, start + 2, rng.choice("AB"))
            for start in range(0, 12, 2)
        ]
        golds = [gold(s, start, start + 2, rng.choice("AB")) for start in range(0, 12, 2)]
        base = match_strict(golds, preds)
        rng.shuffle(preds)
        assert match_strict(golds, preds) == base

    def test_matches_bipartite_oracle_randomized(self):
        rng = random.Random(123)
        for _ in range(100):
            s = make_sentence("x" * 40, doc_id="d", index=rng.randint(0, 2))
            golds, preds = [], []
            for _ in range(rng.randint(0, 12)):
                start = rng.randint(0, 35)
                golds.append(gold(s, start, start + rng.randint(1, 4), rng.choice("ABC")))
            for _ in range(rng.randint(0, 12)):
                start = rng.randint(0, 35)
                preds.append(pred(s, start, start + rng.randint(1, 4), rng.choice("ABC")))
            got = match_strict(golds, preds)
            want = matching_oracle(
                [(m.sentence.key, m.span.start, m.span.end, m.category) for m in golds],
                [
                    (e.candidate.sentence_key, e.candidate.span.start, e.candidate.span.end, e.predicted)
                    for e in preds
                ],
            )
            assert got == want


class TestEvalResult:
    def test_micro_is_sum_of_per_type(self):
        result = EvalResult(
            per_type={"A": Counts(1, 2, 3), "B": Counts(4, 5, 6)}, type_order=("A", "B")
        )
        assert result.micro == Counts(5, 7, 9)

    def test_evaluate_fills_missing_types(self):
        s = make_sentence("p53 binds DNA")
        result = evaluate([gold(s, 0, 3, "A")], [], type_order=("A", "B"))
        assert result.counts_for("B") == Counts(0, 0, 0)


class TestRenderReport:
    def result(self) -> EvalResult:
        return EvalResult(
            per_type={"Species": Counts(5, 1, 0), "Chemical": Counts(5, 1, 0)},
            type_order=("Species", "Chemical"),
        )

    def test_single_row_tsv(self):
        text = render_report(self.result(), "tsv")
        lines = text.strip().split("\n")
        assert len(lines) == 2
        assert lines[0].split("\t")[0] == "config"
        assert lines[0].split("\t")[1:4] == ["Species P", "Species R", "Species F1"]
        row = lines[1].split("\t")
        assert row[0] == "run"
        assert row[1] == "83.33"  # 5/6

    def test_markdown(self):
        text = render_report({"mine": self.result()}, "markdown")
        assert text.startswith("| config |")
        assert "| mine |" in text

    def test_identical_inputs_identical_strings(self):
        assert render_report(self.result(), "tsv") == render_report(self.result(), "tsv")

    def test_rounding_half_up(self):
        # 1/8 = 12.5% precision -> "12.50"; 2/3 recall = 66.666 -> "66.67"
        result = EvalResult(per_type={"A": Counts(1, 7, 0)}, type_order=("A",))
        assert "12.50" in render_report(result, "tsv")
        result2 = EvalResult(per_type={"A": Counts(2, 1, 1)}, type_order=("A",))
        assert "66.67" in render_report(result2, "tsv")

    def test_unknown_format_rejected(self):
        with pytest.raises(ValidationError):
            render_report(self.result(), "html")
