#!/usr/bin/env python3
"""Regenerate the golden run outputs under tests/golden/.

Runs every preset against the bundled fixtures with the scripted mock
gateway and freezes predictions.jsonl and report.tsv. Only rerun this
after an intentional behavior change, and inspect the diff.
"""

from __future__ import annotations

import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from markner.orchestrator import load_config, run_pipeline  # noqa: E402

PRESETS = ("passthrough", "retype-gpt", "kg-vote", "kg-gpt")


def main() -> None:
    golden_root = ROOT / "tests" / "golden"
    for preset in PRESETS:
        config = load_config(ROOT / "presets" / f"{preset}.json")
        with tempfile.TemporaryDirectory() as tmp:
            run_pipeline(config, tmp)
            target = golden_root / preset
            target.mkdir(parents=True, exist_ok=True)
            for name in ("predictions.jsonl", "report.tsv"):
                shutil.copyfile(Path(tmp) / name, target / name)
        print(f"froze {preset}")


if __name__ == "__main__":
    main()
