"""Strict-match scoring and report rendering.

A prediction counts only with exact (sentence, start, end, type); matching
is one-to-one, so duplicated correct predictions cost false positives.
Raw ratios are kept internally, percentages are rounded half-up to two
decimals only at the report boundary.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from .corpus import GoldMention, OTHER
from .errors import ValidationError
from .type_prediction import TypedEntity


@dataclass(frozen=True)
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def match_strict(
    gold: list[GoldMention] | tuple[GoldMention, ...],
    pred: list[TypedEntity] | tuple[TypedEntity, ...],
    known_sentences: set[tuple[str, int]] | None = None,
) -> dict[str, Counts]:
    """Per-type one-to-one strict matching.

    Identical (sentence, start, end, type) keys pair up at most once each;
    leftover predictions are fp, leftover gold are fn. Order-independent.
    """
    for entity in pred:
        if entity.predicted == OTHER:
            raise ValidationError("predictions must not contain OTHER; filter first")
        if known_sentences is not None and entity.candidate.sentence_key not in known_sentences:
            raise ValidationError(
                f"prediction references unknown sentence {entity.candidate.sentence_key}"
            )

    gold_keys = Counter(
        (m.sentence.key, m.span.start, m.span.end, m.category) for m in gold
    )
    pred_keys = Counter(
        (e.candidate.sentence_key, e.candidate.span.start, e.candidate.span.end, e.predicted)
        for e in pred
    )
    types = {key[3] for key in gold_keys} | {key[3] for key in pred_keys}
    result: dict[str, Counts] = {}
    for t in sorted(types):
        tp = sum(
            min(count, pred_keys.get(key, 0))
            for key, count in gold_keys.items()
            if key[3] == t
        )
        n_gold = sum(count for key, count in gold_keys.items() if key[3] == t)
        n_pred = sum(count for key, count in pred_keys.items() if key[3] == t)
        result[t] = Counts(tp=tp, fp=n_pred - tp, fn=n_gold - tp)
    return result


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall (same unit in as out)."""
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def compute_prf(c: Counts) -> tuple[float, float, float]:
    """(precision, recall, f1) as percentages; zero denominators give 0."""
    precision = 100.0 * c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = 100.0 * c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    return precision, recall, f1_score(precision, recall)


@dataclass(frozen=True)
class EvalResult:
    per_type: dict[str, Counts]
    type_order: tuple[str, ...]

    @property
    def micro(self) -> Counts:
        total = Counts()
        for counts in self.per_type.values():
            total = total + counts
        return total

    def counts_for(self, entity_type: str) -> Counts:
        return self.per_type.get(entity_type, Counts())


def evaluate(
    gold,
    pred,
    type_order: tuple[str, ...],
    known_sentences: set[tuple[str, int]] | None = None,
) -> EvalResult:
    per_type = match_strict(gold, pred, known_sentences)
    for t in type_order:
        per_type.setdefault(t, Counts())
    return EvalResult(per_type=per_type, type_order=tuple(type_order))


def _pct(value: float) -> str:
    return str(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def _row_cells(result: EvalResult) -> list[str]:
    cells = []
    for t in result.type_order:
        for value in compute_prf(result.counts_for(t)):
            cells.append(_pct(value))
    for value in compute_prf(result.micro):
        cells.append(_pct(value))
    return cells


def _header_cells(type_order: tuple[str, ...]) -> list[str]:
    cells = ["config"]
    for t in [*type_order, "micro"]:
        cells.extend([f"{t} P", f"{t} R", f"{t} F1"])
    return cells


def render_report(
    results: EvalResult | dict[str, EvalResult],
    fmt: str = "tsv",
) -> str:
    """Render one row per configuration: P/R/F1 per type plus micro.

    ``results`` is a single EvalResult (one anonymous row) or an ordered
    mapping of row label to EvalResult. Formats: tsv, markdown.
    """
    if isinstance(results, EvalResult):
        results = {"run": results}
    if fmt not in ("tsv", "markdown"):
        raise ValidationError(f"unknown report format {fmt!r}")
    if not results:
        raise ValidationError("no results to render")
    type_order = next(iter(results.values())).type_order
    header = _header_cells(type_order)
    rows = [[label, *_row_cells(result)] for label, result in results.items()]

    if fmt == "tsv":
        lines = ["\t".join(header)]
        lines.extend("\t".join(row) for row in rows)
        return "\n".join(lines) + "\n"

    lines = ["| " + " | ".join(header) + " |"]
    lines.append("|" + "|".join([" --- "] * len(header)) + "|")
    lines.extend("| " + " | ".join(row) + " |" for row in rows)
    return "\n".join(lines) + "\n"
