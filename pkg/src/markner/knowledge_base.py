"""Dictionary of (name, category) pairs with cosine top-k retrieval.

Vectors are unit-normalized on ingest, so cosine similarity is a plain
dot product and retrieval is an exhaustive scan — exact by construction,
and fast enough at the few-hundred-thousand-entry scale this pipeline
targets. Embeddings come from a pluggable provider: a precomputed file,
an HTTP bridge, or the offline hashed-trigram fallback.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import requests

from .errors import ValidationError

logger = logging.getLogger(__name__)

DEFAULT_K = 5
DEFAULT_FALLBACK_DIM = 256


@dataclass(frozen=True)
class KbEntry:
    name: str
    category: str


@dataclass(frozen=True)
class Neighbor:
    entry: KbEntry
    similarity: float


# ---------------------------------------------------------------------------
# Embedding providers
# ---------------------------------------------------------------------------


class EmbeddingProvider:
    """Yields one vector per name; all vectors share one dimension."""

    def embed(self, names: list[str]) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError


@lru_cache(maxsize=262144)
def _gram_slot(gram: str, dim: int) -> tuple[int, int]:
    digest = hashlib.sha1(gram.encode("utf-8")).digest()
    bucket = int.from_bytes(digest[:4], "big") % dim
    sign = 1 if digest[4] & 1 else -1
    return bucket, sign


def fallback_embed(name: str, dim: int = DEFAULT_FALLBACK_DIM) -> np.ndarray:
    """Deterministic offline embedding: hashed character trigrams.

    The lowercased name is padded with boundary sentinels so short names
    still share grams with their extensions, each trigram is hashed to a
    signed bucket, and the bag is L2-normalized. Pure function of
    (name, dim).
    """
    if not name:
        raise ValidationError("cannot embed an empty name")
    if dim < 8:
        raise ValidationError("fallback embedding dim must be >= 8")
    padded = "\x01" + name.lower() + "\x02"
    vec = np.zeros(dim, dtype=np.float64)
    for i in range(len(padded) - 2):
        bucket, sign = _gram_slot(padded[i : i + 3], dim)
        vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        # all grams cancelled; fall back to a single unsigned bucket
        bucket, _ = _gram_slot(padded, dim)
        vec[bucket] = 1.0
        norm = 1.0
    return vec / norm


class FallbackEmbeddingProvider(EmbeddingProvider):
    def __init__(self, dim: int = DEFAULT_FALLBACK_DIM):
        if dim < 8:
            raise ValidationError("fallback embedding dim must be >= 8")
        self.dim = dim

    def embed(self, names: list[str]) -> np.ndarray:
        return np.stack([fallback_embed(name, self.dim) for name in names])

    def describe(self) -> str:
        return f"fallback:{self.dim}"


class PrecomputedFileProvider(EmbeddingProvider):
    """Embeddings from a JSON-lines file of {"name": ..., "vector": [...]}.

    The dimension is inferred from the first line and enforced after.
    Unknown query names are an error: a precomputed file either covers the
    run or it does not.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.vectors: dict[str, np.ndarray] = {}
        self.dim: int | None = None
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                    name, values = record["name"], record["vector"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ValidationError(f"{self.path}:{lineno}: bad embedding record: {exc}") from exc
                vec = np.asarray(values, dtype=np.float64)
                if self.dim is None:
                    self.dim = int(vec.shape[0])
                elif vec.shape[0] != self.dim:
                    raise ValidationError(
                        f"{self.path}:{lineno}: dim {vec.shape[0]} != expected {self.dim}"
                    )
                self.vectors[name] = vec
        if not self.vectors:
            raise ValidationError(f"{self.path}: no embeddings found")

    def embed(self, names: list[str]) -> np.ndarray:
        rows = []
        for name in names:
            if name not in self.vectors:
                raise ValidationError(f"no precomputed embedding for {name!r} in {self.path}")
            rows.append(self.vectors[name])
        return np.stack(rows)

    def describe(self) -> str:
        return f"file:{self.path}"


class HttpEmbeddingProvider(EmbeddingProvider):
    """POST /embed {"names": [...]} -> {"dim": int, "vectors": [[...]]}."""

    def __init__(self, base_url: str, batch_size: int = 64, attempts: int = 3, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.batch_size = batch_size
        self.attempts = attempts
        self.timeout = timeout
        self.session = requests.Session()

    def _post(self, names: list[str]) -> np.ndarray:
        last: Exception | None = None
        for attempt in range(self.attempts):
            try:
                resp = self.session.post(
                    f"{self.base_url}/embed", json={"names": names}, timeout=self.timeout
                )
                if resp.status_code >= 500:
                    raise requests.RequestException(f"HTTP {resp.status_code}")
                if resp.status_code >= 400:
                    raise ValidationError(f"embedding service rejected batch: HTTP {resp.status_code}: {resp.text[:300]}")
                payload = resp.json()
                vectors = np.asarray(payload["vectors"], dtype=np.float64)
                if vectors.shape[0] != len(names):
                    raise ValidationError("embedding service returned a non-parallel batch")
                return vectors
            except (requests.RequestException, ValueError, KeyError) as exc:
                last = exc
                logger.warning("embedding request attempt %d failed: %s", attempt + 1, exc)
                time.sleep(min(0.2 * (attempt + 1), 1.0))
        raise ValidationError(f"embedding service failed after {self.attempts} attempts: {last}")

    def embed(self, names: list[str]) -> np.ndarray:
        chunks = [
            self._post(names[i : i + self.batch_size])
            for i in range(0, len(names), self.batch_size)
        ]
        return np.concatenate(chunks, axis=0)

    def describe(self) -> str:
        return f"http:{self.base_url}"


def make_provider(spec: str, dim: int = DEFAULT_FALLBACK_DIM) -> EmbeddingProvider:
    """Build a provider from a config string: fallback | file:PATH | http:URL."""
    if spec == "fallback":
        return FallbackEmbeddingProvider(dim)
    if spec.startswith("file:"):
        return PrecomputedFileProvider(spec[len("file:") :])
    if spec.startswith("http:") or spec.startswith("https:"):
        return HttpEmbeddingProvider(spec)
    raise ValidationError(f"unknown embedding provider {spec!r}")


# ---------------------------------------------------------------------------
# Dictionary loading and sampling
# ---------------------------------------------------------------------------


def load_dictionary(path: str | Path) -> list[KbEntry]:
    """Load a `name<TAB>category` TSV, deduplicated, bad lines skipped."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"dictionary file not found: {path}")
    entries: list[KbEntry] = []
    seen: set[tuple[str, str]] = set()
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
            pair = (parts[0], parts[1])
            if pair in seen:
                continue
            seen.add(pair)
            entries.append(KbEntry(name=parts[0], category=parts[1]))
    if not entries:
        raise ValidationError(f"{path}: dictionary holds no valid entries")
    if skipped:
        logger.warning("%s: skipped %d malformed lines", path, skipped)
    return entries


def sample_entries(entries: list[KbEntry], n: int, seed: int) -> list[KbEntry]:
    """Uniform sample without replacement, deterministic per seed."""
    if n < 1:
        raise ValidationError("sample size must be >= 1")
    return random.Random(seed).sample(entries, min(n, len(entries)))


# ---------------------------------------------------------------------------
# Index
# ---------------------------------------------------------------------------


@dataclass
class KbIndex:
    entries: tuple[KbEntry, ...]
    vectors: np.ndarray  # (n, dim) float64, rows unit-norm
    dim: int
    source_digest: str = ""
    sample_seed: int | None = None
    sample_size: int | None = None
    provider_id: str = ""
    _sort_keys: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)
    _digest: str | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.entries)

    def _sort_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        # single-attribute publish keeps this safe under concurrent reads
        keys = self._sort_keys
        if keys is None:
            keys = (
                np.array([e.name for e in self.entries]),
                np.array([e.category for e in self.entries]),
            )
            self._sort_keys = keys
        return keys

    @property
    def digest(self) -> str:
        if self._digest is None:
            payload = json.dumps(
                {
                    "dim": self.dim,
                    "source_digest": self.source_digest,
                    "sample_seed": self.sample_seed,
                    "sample_size": self.sample_size,
                    "entries": [[e.name, e.category] for e in self.entries],
                    "vectors": self.vectors.tolist(),
                },
                sort_keys=True,
                separators=(",", ":"),
                ensure_ascii=False,
            )
            self._digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()
        return self._digest


def attach_embeddings(
    entries: list[KbEntry],
    provider: EmbeddingProvider,
    source_digest: str = "",
    sample_seed: int | None = None,
    sample_size: int | None = None,
    batch_size: int = 256,
) -> KbIndex:
    """Embed every entry name, normalize, and build the retrieval index."""
    if not entries:
        raise ValidationError("cannot build an index from zero entries")
    blocks: list[np.ndarray] = []
    dim: int | None = None
    for i in range(0, len(entries), batch_size):
        batch = entries[i : i + batch_size]
        vectors = np.asarray(provider.embed([e.name for e in batch]), dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(batch):
            raise ValidationError("embedding provider returned a malformed batch")
        if dim is None:
            dim = int(vectors.shape[1])
        elif int(vectors.shape[1]) != dim:
            raise ValidationError(
                f"embedding dim changed from {dim} to {vectors.shape[1]} at entry "
                f"{batch[0].name!r}"
            )
        norms = np.linalg.norm(vectors, axis=1)
        for j, norm in enumerate(norms):
            if norm < 1e-12:
                raise ValidationError(f"zero embedding vector for entry {batch[j].name!r}")
        blocks.append(vectors / norms[:, None])
    matrix = np.concatenate(blocks, axis=0)
    return KbIndex(
        entries=tuple(entries),
        vectors=matrix,
        dim=int(dim),
        source_digest=source_digest,
        sample_seed=sample_seed,
        sample_size=sample_size,
        provider_id=provider.describe(),
    )


def build_index(
    dictionary_path: str | Path,
    size: int,
    seed: int,
    provider: EmbeddingProvider,
) -> KbIndex:
    """load -> sample -> embed, recording build metadata for the digest."""
    dictionary_path = Path(dictionary_path)
    entries = load_dictionary(dictionary_path)
    if size > len(entries):
        logger.warning(
            "requested sample of %d from %d dictionary entries; clamped", size, len(entries)
        )
    sample = sample_entries(entries, size, seed)
    digest = hashlib.sha256(dictionary_path.read_bytes()).hexdigest()
    return attach_embeddings(
        sample,
        provider,
        source_digest=digest,
        sample_seed=seed,
        sample_size=min(size, len(entries)),
    )


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """dot(a, b) / (|a| |b|); requires equal dims."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"dim mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValidationError("cosine similarity undefined for zero vectors")
    return float(np.dot(a, b) / (na * nb))


def retrieve_top_k(
    index: KbIndex,
    query_name: str,
    k: int = DEFAULT_K,
    provider: EmbeddingProvider | None = None,
) -> list[Neighbor]:
    """Exhaustive top-k by cosine, ties broken by (name, category).

    The query is embedded with ``provider`` (defaulting to the fallback
    embedder at the index dim), normalized, and scored against every
    entry; ordering is similarity descending, then entry name, then
    category, so results are fully deterministic.
    """
    if len(index) == 0:
        raise ValidationError("cannot retrieve from an empty index")
    if k < 1:
        raise ValidationError("k must be >= 1")
    if provider is None:
        provider = FallbackEmbeddingProvider(index.dim)
    q = np.asarray(provider.embed([query_name]), dtype=np.float64)[0]
    if q.shape[0] != index.dim:
        raise ValidationError(f"query dim {q.shape[0]} != index dim {index.dim}")
    norm = float(np.linalg.norm(q))
    if norm < 1e-12:
        raise ValidationError(f"zero embedding for query {query_name!r}")
    if abs(norm - 1.0) > 1e-12:  # don't perturb an already-unit vector
        q = q / norm
    scores = index.vectors @ q
    # Order on similarities rounded well below any meaningful precision so
    # mathematically tied entries fall to the (name, category) tie-break
    # instead of floating-point noise.
    names, categories = index._sort_arrays()
    order = np.lexsort((categories, names, -np.round(scores, 12)))
    top = order[: min(k, len(index))]
    return [Neighbor(entry=index.entries[i], similarity=float(scores[i])) for i in top]


# ---------------------------------------------------------------------------
# Index snapshots
# ---------------------------------------------------------------------------


def save_index(index: KbIndex, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    snapshot = {
        "dim": index.dim,
        "source_digest": index.source_digest,
        "sample_seed": index.sample_seed,
        "sample_size": index.sample_size,
        "provider_id": index.provider_id,
        "entries": [[e.name, e.category] for e in index.entries],
        "vectors": index.vectors.tolist(),
    }
    path.write_text(json.dumps(snapshot, ensure_ascii=False), encoding="utf-8")


def load_index(path: str | Path) -> KbIndex:
    path = Path(path)
    raw = json.loads(path.read_text(encoding="utf-8"))
    entries = tuple(KbEntry(name=n, category=c) for n, c in raw["entries"])
    vectors = np.asarray(raw["vectors"], dtype=np.float64)
    return KbIndex(
        entries=entries,
        vectors=vectors,
        dim=int(raw["dim"]),
        source_digest=raw.get("source_digest", ""),
        sample_seed=raw.get("sample_seed"),
        sample_size=raw.get("sample_size"),
        provider_id=raw.get("provider_id", ""),
    )
