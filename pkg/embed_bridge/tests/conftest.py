from __future__ import annotations

from pathlib import Path

import pytest

from embed_bridge.encoders import HashEncoder

BRIDGE_ROOT = Path(__file__).resolve().parent.parent
WORKSPACE_ROOT = BRIDGE_ROOT.parent
PRIMARY_DICTIONARY = WORKSPACE_ROOT / "fixtures" / "dictionary_1k.tsv"


@pytest.fixture(scope="session")
def encoder() -> HashEncoder:
    return HashEncoder(dim=64)


@pytest.fixture(scope="session")
def primary_dictionary() -> Path:
    assert PRIMARY_DICTIONARY.exists(), "primary fixture dictionary missing"
    return PRIMARY_DICTIONARY
