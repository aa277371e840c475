"""Export precomputed embeddings for offline use.

Reads a `name<TAB>category` dictionary, embeds each distinct name once,
and writes JSON lines of {"name": ..., "vector": [...]} — the
precomputed-embeddings format the retrieval pipeline consumes with its
`file:PATH` provider. Deterministic: rerunning writes identical bytes.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from .encoders import Encoder

logger = logging.getLogger(__name__)


def read_dictionary_names(path: str | Path) -> list[str]:
    """Distinct names from a TSV dictionary, in first-seen order."""
    path = Path(path)
    names: list[str] = []
    seen: set[str] = set()
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                logger.warning("%s:%d: malformed dictionary line, skipped", path, lineno)
                skipped += 1
                continue
            if parts[0] not in seen:
                seen.add(parts[0])
                names.append(parts[0])
    if skipped:
        logger.warning("%s: skipped %d malformed lines", path, skipped)
    if not names:
        raise ValueError(f"{path}: no names found")
    return names


def export_file(
    dictionary_path: str | Path,
    out_path: str | Path,
    encoder: Encoder,
    batch_size: int = 64,
) -> int:
    """Embed every dictionary name and write the JSON-lines file.

    Returns the number of lines written.
    """
    names = read_dictionary_names(dictionary_path)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    written = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for i in range(0, len(names), batch_size):
            batch = names[i : i + batch_size]
            vectors = encoder.encode(batch)
            for name, vector in zip(batch, vectors):
                fh.write(
                    json.dumps(
                        {"name": name, "vector": [float(x) for x in vector]},
                        ensure_ascii=False,
                    )
                    + "\n"
                )
                written += 1
    logger.info("wrote %d embeddings (dim %d) to %s", written, encoder.dim, out_path)
    return written
