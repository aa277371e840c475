from __future__ import annotations

from pathlib import Path

import pytest

from markner.corpus import Sentence, Span
from markner.span_extraction import CandidateSpan

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
PRESETS = ROOT / "presets"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def presets_dir() -> Path:
    return PRESETS


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN


@pytest.fixture(scope="session")
def fixture_corpus():
    from markner.corpus import load_corpus

    return load_corpus(FIXTURES / "corpus_10.json")


def make_sentence(text: str, doc_id: str = "d", index: int = 0) -> Sentence:
    return Sentence(doc_id=doc_id, index=index, text=text)


def make_candidate(
    sentence: Sentence, start: int, end: int, source_type: str | None = None
) -> CandidateSpan:
    return CandidateSpan(
        doc_id=sentence.doc_id,
        sentence_index=sentence.index,
        span=Span(start, end),
        surface=sentence.text[start:end],
        source_type=source_type,
    )
