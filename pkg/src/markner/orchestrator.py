"""Wire corpus -> extraction -> retrieval -> typing -> evaluation.

Every stage persists its output as JSON-lines so stages are resumable,
independently runnable from the CLI, and byte-reproducible under the mock
gateway. One global run seed derives all stage seeds by labeled hashing.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .corpus import Corpus, OTHER, Sentence, Span, load_corpus, sample_fewshot
from .errors import PipelineError, ValidationError
from .evaluation import EvalResult, evaluate, render_report
from .figures import save_report_figure, save_sweep_figure
from .knowledge_base import (
    DEFAULT_FALLBACK_DIM,
    DEFAULT_K,
    EmbeddingProvider,
    KbIndex,
    build_index,
    load_dictionary,
    load_index,
    make_provider,
    save_index,
)
from .llm_gateway import (
    FileCache,
    HttpProvider,
    LlmGateway,
    MockProvider,
    Provider,
    RateLimiter,
    ReplayProvider,
    RequestOptions,
    RetryPolicy,
    mock_rules_from_file,
)
from .span_extraction import (
    SPAN_PLACEHOLDERS,
    CandidateSpan,
    default_span_template,
    extract_spans_for_type,
    merge_candidates,
)
from .templates import TextTemplate, load_template
from .type_prediction import (
    KNOWLEDGE_PLACEHOLDERS,
    RETYPE_PLACEHOLDERS,
    STRATEGIES,
    CategoryMap,
    TypedEntity,
    default_knowledge_template,
    default_retype_template,
    filter_other,
    predict_type,
)

logger = logging.getLogger(__name__)


def derive_seed(seed: int, label: str) -> int:
    """Stage seed = hash of (run seed, stage label); no seed bookkeeping."""
    digest = hashlib.sha256(f"{seed}/{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KbConfig:
    dictionary: str
    size: int
    provider: str = "fallback"
    seed: int | None = None
    dim: int = DEFAULT_FALLBACK_DIM
    cache: str | None = None


@dataclass(frozen=True)
class GatewayConfig:
    provider: str = "mock:"
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.0
    max_tokens: int = 256
    cache_dir: str | None = None
    rate_limit: float | None = None
    max_in_flight: int = 4
    retry_attempts: int = 3
    retry_base: float = 1.0
    retry_factor: float = 2.0
    transcript: str | None = None


@dataclass(frozen=True)
class PipelineConfig:
    corpus: str
    strategy: str = "passthrough"
    entity_types: tuple[str, ...] | None = None
    shots: int = 1
    k: int = DEFAULT_K
    seed: int = 13
    span_template: str | None = None
    retype_template: str | None = None
    knowledge_template: str | None = None
    kb: KbConfig | None = None
    category_map: str | None = None
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    raw: dict | None = None  # config as written, for the digest

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"unknown strategy {self.strategy!r}")
        if self.strategy in ("kg-vote", "kg-gpt"):
            if self.kb is None or self.category_map is None:
                raise ValidationError(
                    f"strategy {self.strategy!r} requires 'kb' and 'category_map'"
                )
        if self.shots < 0:
            raise ValidationError("shots must be >= 0")
        if self.k < 1:
            raise ValidationError("k must be >= 1")

    @property
    def digest(self) -> str:
        payload = json.dumps(self.raw or {}, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _resolve(base: Path, value: str | None) -> str | None:
    if value is None:
        return None
    return str((base / value).resolve())


def _resolve_provider(base: Path, spec: str) -> str:
    for prefix in ("mock:", "replay:", "file:"):
        if spec.startswith(prefix):
            return prefix + str((base / spec[len(prefix) :]).resolve())
    return spec


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    """Read a declarative config file; relative paths resolve next to it.

    ``overrides`` (already-typed values keyed by top-level field) are
    applied after the file, with paths taken as given.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
    if overrides:
        raw = {**raw, **{k: v for k, v in overrides.items() if v is not None}}
    base = path.parent

    if "corpus" not in raw:
        raise ValidationError(f"{path}: config requires a 'corpus' path")

    kb = None
    if raw.get("kb") is not None:
        kb_raw = raw["kb"]
        if "dictionary" not in kb_raw or "size" not in kb_raw:
            raise ValidationError(f"{path}: kb config requires 'dictionary' and 'size'")
        kb = KbConfig(
            dictionary=_resolve(base, kb_raw["dictionary"]),
            size=int(kb_raw["size"]),
            provider=_resolve_provider(base, kb_raw.get("provider", "fallback")),
            seed=kb_raw.get("seed"),
            dim=int(kb_raw.get("dim", DEFAULT_FALLBACK_DIM)),
            cache=_resolve(base, kb_raw.get("cache")),
        )

    gw_raw = raw.get("gateway", {})
    retry = gw_raw.get("retry", {})
    gateway = GatewayConfig(
        provider=_resolve_provider(base, gw_raw.get("provider", "mock:")),
        model=gw_raw.get("model", "gpt-3.5-turbo"),
        temperature=float(gw_raw.get("temperature", 0.0)),
        max_tokens=int(gw_raw.get("max_tokens", 256)),
        cache_dir=_resolve(base, gw_raw.get("cache_dir")),
        rate_limit=gw_raw.get("rate_limit"),
        max_in_flight=int(gw_raw.get("max_in_flight", 4)),
        retry_attempts=int(retry.get("attempts", 3)),
        retry_base=float(retry.get("base", 1.0)),
        retry_factor=float(retry.get("factor", 2.0)),
        transcript=_resolve(base, gw_raw.get("transcript")),
    )

    templates = raw.get("templates", {})
    config = PipelineConfig(
        corpus=_resolve(base, raw["corpus"]),
        strategy=raw.get("strategy", "passthrough"),
        entity_types=tuple(raw["entity_types"]) if raw.get("entity_types") else None,
        shots=int(raw.get("shots", 1)),
        k=int(raw.get("k", DEFAULT_K)),
        seed=int(raw.get("seed", 13)),
        span_template=_resolve(base, templates.get("span")),
        retype_template=_resolve(base, templates.get("retype")),
        knowledge_template=_resolve(base, templates.get("knowledge")),
        kb=kb,
        category_map=_resolve(base, raw.get("category_map")),
        gateway=gateway,
        raw=raw,
    )
    config.validate()
    return config


# ---------------------------------------------------------------------------
# Component builders
# ---------------------------------------------------------------------------


def build_provider(spec: str) -> Provider:
    if spec.startswith("mock:"):
        return MockProvider(mock_rules_from_file(spec[len("mock:") :]))
    if spec.startswith("replay:"):
        return ReplayProvider.from_transcript(spec[len("replay:") :])
    if spec.startswith("http://") or spec.startswith("https://"):
        return HttpProvider(spec)
    raise ValidationError(f"unknown gateway provider {spec!r}")


def build_gateway(cfg: GatewayConfig, default_cache_dir: Path | None = None) -> LlmGateway:
    cache_dir = cfg.cache_dir or default_cache_dir
    return LlmGateway(
        provider=build_provider(cfg.provider),
        cache=FileCache(cache_dir) if cache_dir else None,
        retry=RetryPolicy(cfg.retry_attempts, cfg.retry_base, cfg.retry_factor),
        rate_limiter=RateLimiter(cfg.rate_limit) if cfg.rate_limit else None,
        max_in_flight=cfg.max_in_flight,
        transcript_path=cfg.transcript,
    )


def request_options(cfg: GatewayConfig) -> RequestOptions:
    return RequestOptions(
        model_id=cfg.model, temperature=cfg.temperature, max_tokens=cfg.max_tokens
    )


def get_or_build_index(config: PipelineConfig) -> tuple[KbIndex, EmbeddingProvider]:
    kb = config.kb
    if kb is None:
        raise ValidationError("no knowledge-base configuration present")
    provider = make_provider(kb.provider, kb.dim)
    seed = kb.seed if kb.seed is not None else derive_seed(config.seed, "kb-sample")
    if kb.cache and Path(kb.cache).exists():
        cached = load_index(kb.cache)
        # equal requested sizes beyond the dictionary draw the same sample,
        # so compare effective sizes, not requested ones
        effective = min(kb.size, len(load_dictionary(kb.dictionary)))
        if (
            cached.source_digest == file_digest(kb.dictionary)
            and cached.sample_seed == seed
            and cached.provider_id == provider.describe()
            and cached.sample_size == effective
        ):
            logger.info("reusing cached index %s", kb.cache)
            return cached, provider
        logger.warning("index cache %s does not match configuration; rebuilding", kb.cache)
    index = build_index(kb.dictionary, kb.size, seed, provider)
    if kb.cache:
        save_index(index, kb.cache)
    return index, provider


def load_templates(config: PipelineConfig) -> dict[str, TextTemplate]:
    return {
        "span": (
            load_template(config.span_template, SPAN_PLACEHOLDERS)
            if config.span_template
            else default_span_template()
        ),
        "retype": (
            load_template(config.retype_template, RETYPE_PLACEHOLDERS)
            if config.retype_template
            else default_retype_template()
        ),
        "knowledge": (
            load_template(config.knowledge_template, KNOWLEDGE_PLACEHOLDERS)
            if config.knowledge_template
            else default_knowledge_template()
        ),
    }


# ---------------------------------------------------------------------------
# Stage I/O
# ---------------------------------------------------------------------------


def write_candidates(candidates: list[CandidateSpan], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for c in candidates:
            fh.write(
                json.dumps(
                    {
                        "doc_id": c.doc_id,
                        "sentence_index": c.sentence_index,
                        "start": c.span.start,
                        "end": c.span.end,
                        "surface": c.surface,
                        "source_type": c.source_type,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_candidates(path: str | Path) -> list[CandidateSpan]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            r = json.loads(line)
            out.append(
                CandidateSpan(
                    doc_id=r["doc_id"],
                    sentence_index=r["sentence_index"],
                    span=Span(r["start"], r["end"]),
                    surface=r["surface"],
                    source_type=r.get("source_type"),
                )
            )
    return out


def write_predictions(entities: list[TypedEntity], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for e in entities:
            fh.write(
                json.dumps(
                    {
                        "doc_id": e.candidate.doc_id,
                        "sentence_index": e.candidate.sentence_index,
                        "start": e.candidate.span.start,
                        "end": e.candidate.span.end,
                        "type": e.predicted,
                        "strategy": e.strategy,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_predictions(path: str | Path, corpus: Corpus) -> list[TypedEntity]:
    """Load a predictions file back into typed entities.

    Surfaces are recovered from the corpus; a row referencing a sentence
    the corpus does not contain is an error.
    """
    sentences = {s.key: s for s in corpus.sentences}
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            r = json.loads(line)
            key = (r["doc_id"], r["sentence_index"])
            if key not in sentences:
                raise ValidationError(f"{path}:{lineno}: unknown sentence {key}")
            sentence = sentences[key]
            span = Span(r["start"], r["end"])
            if span.end > len(sentence.text):
                raise ValidationError(f"{path}:{lineno}: span out of bounds for {key}")
            out.append(
                TypedEntity(
                    candidate=CandidateSpan(
                        doc_id=r["doc_id"],
                        sentence_index=r["sentence_index"],
                        span=span,
                        surface=sentence.text[span.start : span.end],
                        source_type=None,
                    ),
                    predicted=r["type"],
                    strategy=r.get("strategy", "unknown"),
                )
            )
    return out


def write_stage_meta(path: Path, config: PipelineConfig) -> None:
    Path(str(path) + ".meta.json").write_text(
        json.dumps({"config_digest": config.digest}), encoding="utf-8"
    )


def _stage_reusable(path: Path, config: PipelineConfig) -> bool:
    meta = Path(str(path) + ".meta.json")
    if not path.exists() or not meta.exists():
        return False
    try:
        recorded = json.loads(meta.read_text(encoding="utf-8"))["config_digest"]
    except (json.JSONDecodeError, KeyError):
        return False
    return recorded == config.digest


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def allowed_types(config: PipelineConfig, corpus: Corpus) -> tuple[str, ...]:
    if config.entity_types is None:
        return corpus.entity_types
    unknown = set(config.entity_types) - set(corpus.entity_types)
    if unknown:
        raise ValidationError(f"configured entity types not in corpus: {sorted(unknown)}")
    return config.entity_types


def extract_stage(
    config: PipelineConfig,
    corpus: Corpus,
    gateway: LlmGateway,
    templates: dict[str, TextTemplate],
    warnings: list[str],
) -> list[CandidateSpan]:
    """Stage 1 over the whole corpus: per-type extraction, then merge."""
    types = allowed_types(config, corpus)
    opts = request_options(config.gateway)

    def one(task: tuple[Sentence, str]) -> tuple[list[CandidateSpan], list[str]]:
        sentence, etype = task
        local: list[str] = []
        examples = sample_fewshot(
            corpus,
            etype,
            config.shots,
            derive_seed(config.seed, f"fewshot/{etype}/{sentence.doc_id}/{sentence.index}"),
            exclude=sentence.key,
        )
        found = extract_spans_for_type(
            sentence, etype, gateway, templates["span"], examples, opts, warnings=local
        )
        return found, local

    candidates: list[CandidateSpan] = []
    with concurrent.futures.ThreadPoolExecutor(max_workers=config.gateway.max_in_flight) as pool:
        for sentence in corpus.sentences:
            tasks = [(sentence, etype) for etype in types]
            per_type: list[list[CandidateSpan]] = []
            for found, local in pool.map(one, tasks):
                per_type.append(found)
                warnings.extend(local)
            candidates.extend(merge_candidates(per_type))
    return candidates


def retype_stage(
    config: PipelineConfig,
    corpus: Corpus,
    candidates: list[CandidateSpan],
    gateway: LlmGateway,
    templates: dict[str, TextTemplate],
    warnings: list[str],
) -> tuple[list[TypedEntity], KbIndex | None]:
    """Stage 2: type every candidate, then drop OTHER."""
    types = allowed_types(config, corpus)
    opts = request_options(config.gateway)
    sentences = {s.key: s for s in corpus.sentences}

    index: KbIndex | None = None
    query_provider: EmbeddingProvider | None = None
    category_map: CategoryMap | None = None
    if config.strategy in ("kg-vote", "kg-gpt"):
        index, query_provider = get_or_build_index(config)
        category_map = CategoryMap.load(config.category_map, types)

    def one(candidate: CandidateSpan) -> TypedEntity:
        sentence = sentences.get(candidate.sentence_key)
        if sentence is None:
            raise ValidationError(f"candidate references unknown sentence {candidate.sentence_key}")
        return predict_type(
            config.strategy,
            sentence.text,
            candidate,
            allowed=types,
            gateway=gateway,
            opts=opts,
            retype_template=templates["retype"],
            knowledge_template=templates["knowledge"],
            index=index,
            query_provider=query_provider,
            category_map=category_map,
            k=config.k,
        )

    with concurrent.futures.ThreadPoolExecutor(max_workers=config.gateway.max_in_flight) as pool:
        typed = list(pool.map(one, candidates))
    dropped = sum(1 for e in typed if e.predicted == OTHER)
    if dropped:
        warnings.append(f"{dropped} candidates typed {OTHER} and dropped")
    return filter_other(typed), index


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    config_digest: str
    corpus_digest: str
    index_digest: str | None
    stage_seconds: dict[str, float]
    warning_counts: dict[str, int]
    counts: dict[str, int]

    @property
    def digest(self) -> str:
        """Digest over the reproducible fields (timings excluded)."""
        payload = json.dumps(
            {
                "config_digest": self.config_digest,
                "corpus_digest": self.corpus_digest,
                "index_digest": self.index_digest,
                "warning_counts": self.warning_counts,
                "counts": self.counts,
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def to_json(self) -> str:
        return json.dumps(
            {
                "config_digest": self.config_digest,
                "corpus_digest": self.corpus_digest,
                "index_digest": self.index_digest,
                "stage_seconds": self.stage_seconds,
                "warning_counts": self.warning_counts,
                "counts": self.counts,
                "manifest_digest": self.digest,
            },
            indent=2,
            sort_keys=True,
        )


@dataclass(frozen=True)
class PipelineResult:
    predictions_path: Path
    result: EvalResult
    manifest: RunManifest


def run_pipeline(config: PipelineConfig, out_dir: str | Path, resume: bool = False) -> PipelineResult:
    """Execute all stages, writing every artifact under ``out_dir``.

    With ``resume``, stage outputs from an earlier run of the *same*
    config (matching digest sidecar) are reused instead of recomputed.
    """
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus = load_corpus(config.corpus)
    templates = load_templates(config)
    gateway = build_gateway(config.gateway, default_cache_dir=out_dir / "llm_cache")

    timings: dict[str, float] = {}
    warning_counts: dict[str, int] = {}
    candidates_path = out_dir / "candidates.jsonl"
    predictions_path = out_dir / "predictions.jsonl"

    # stage 1
    started = time.monotonic()
    if resume and _stage_reusable(candidates_path, config):
        logger.info("resuming: stage 1 output reused from %s", candidates_path)
        candidates = read_candidates(candidates_path)
        warning_counts["extract"] = 0
    else:
        extraction_warnings: list[str] = []
        try:
            candidates = extract_stage(config, corpus, gateway, templates, extraction_warnings)
        except PipelineError as exc:
            raise type(exc)(f"[stage extract] {exc}") from exc
        write_candidates(candidates, candidates_path)
        write_stage_meta(candidates_path, config)
        warning_counts["extract"] = len(extraction_warnings)
    timings["extract"] = time.monotonic() - started

    # stage 2
    started = time.monotonic()
    index: KbIndex | None = None
    if resume and _stage_reusable(predictions_path, config):
        logger.info("resuming: stage 2 output reused from %s", predictions_path)
        predictions = read_predictions(predictions_path, corpus)
        warning_counts["retype"] = 0
        if config.strategy in ("kg-vote", "kg-gpt"):
            index, _ = get_or_build_index(config)
    else:
        retype_warnings: list[str] = []
        try:
            predictions, index = retype_stage(
                config, corpus, candidates, gateway, templates, retype_warnings
            )
        except PipelineError as exc:
            raise type(exc)(f"[stage retype] {exc}") from exc
        write_predictions(predictions, predictions_path)
        write_stage_meta(predictions_path, config)
        warning_counts["retype"] = len(retype_warnings)
    timings["retype"] = time.monotonic() - started

    # stage 3: score and report
    started = time.monotonic()
    types = allowed_types(config, corpus)
    result = evaluate(
        [m for m in corpus.mentions if m.category in types],
        predictions,
        types,
        corpus.sentence_keys(),
    )
    report = {config.strategy: result}
    (out_dir / "report.tsv").write_text(render_report(report, "tsv"), encoding="utf-8")
    (out_dir / "report.md").write_text(render_report(report, "markdown"), encoding="utf-8")
    save_report_figure(report, out_dir / "report.png")
    timings["evaluate"] = time.monotonic() - started

    manifest = RunManifest(
        config_digest=config.digest,
        corpus_digest=file_digest(config.corpus),
        index_digest=index.digest if index is not None else None,
        stage_seconds={k: round(v, 6) for k, v in timings.items()},
        warning_counts=warning_counts,
        counts={
            "sentences": len(corpus.sentences),
            "gold_mentions": len(corpus.mentions),
            "candidates": len(candidates),
            "predictions": len(predictions),
        },
    )
    (out_dir / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    return PipelineResult(predictions_path=predictions_path, result=result, manifest=manifest)


def output_digest(out_dir: str | Path) -> str:
    """Digest of the run's deterministic outputs (predictions + report)."""
    out_dir = Path(out_dir)
    h = hashlib.sha256()
    for name in ("predictions.jsonl", "report.tsv"):
        h.update((out_dir / name).read_bytes())
    return h.hexdigest()


def ablation_sweep(
    config: PipelineConfig,
    sizes: list[int],
    out_dir: str | Path,
) -> list[tuple[int, str, EvalResult]]:
    """Evaluate kg-vote and kg-gpt at each knowledge-base size.

    Sizes beyond the dictionary are clamped with a warning. Samples of
    different sizes are independent draws from the same seed; a smaller
    sample is not necessarily a subset of a larger one.
    """
    if config.kb is None or config.category_map is None:
        raise ValidationError("sweep requires a config with 'kb' and 'category_map'")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dict_size = len(load_dictionary(config.kb.dictionary))
    rows: list[tuple[int, str, EvalResult]] = []
    for size in sizes:
        effective = size
        if size > dict_size:
            logger.warning("kb size %d exceeds dictionary (%d entries); clamped", size, dict_size)
            effective = dict_size
        for strategy in ("kg-vote", "kg-gpt"):
            sub_raw = dict(config.raw or {})
            sub_raw["strategy"] = strategy
            sub_raw.setdefault("kb", {})
            sub_raw["kb"] = {**sub_raw["kb"], "size": effective}
            sub = replace(
                config,
                strategy=strategy,
                kb=replace(config.kb, size=effective, cache=None),
                raw=sub_raw,
            )
            run_out = out_dir / f"{strategy}-{effective}"
            outcome = run_pipeline(sub, run_out)
            rows.append((effective, strategy, outcome.result))

    table = {f"{strategy} ({size})": result for size, strategy, result in rows}
    (out_dir / "sweep.tsv").write_text(render_report(table, "tsv"), encoding="utf-8")
    (out_dir / "sweep.md").write_text(render_report(table, "markdown"), encoding="utf-8")
    save_sweep_figure(rows, out_dir / "sweep.png")
    return rows
