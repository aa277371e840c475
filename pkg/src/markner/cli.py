"""Command-line interface.

Exit codes: 0 success, 1 validation/configuration error, 2 transport
error. Reports are written as TSV and markdown with a PNG figure
alongside.
"""

from __future__ import annotations

import collections
import logging
import sys
from pathlib import Path

import click

from . import orchestrator
from .corpus import load_corpus
from .errors import GatewayError, ValidationError
from .evaluation import evaluate, render_report
from .figures import save_report_figure
from .knowledge_base import build_index, make_provider, save_index
from .orchestrator import (
    ablation_sweep,
    build_gateway,
    load_config,
    output_digest,
    run_pipeline,
)

logger = logging.getLogger(__name__)


class PipelineGroup(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except ValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except GatewayError as exc:
            click.echo(f"transport error: {exc}", err=True)
            sys.exit(2)


@click.group(cls=PipelineGroup)
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Two-stage biomedical NER pipeline."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.argument("corpus_path", type=click.Path())
def ingest(corpus_path: str) -> None:
    """Load and validate a corpus file, printing a summary."""
    corpus = load_corpus(corpus_path)
    by_type = collections.Counter(m.category for m in corpus.mentions)
    click.echo(f"sentences: {len(corpus.sentences)}")
    click.echo(f"mentions: {len(corpus.mentions)}")
    for etype in corpus.entity_types:
        click.echo(f"  {etype}: {by_type.get(etype, 0)}")
    click.echo(f"digest: {orchestrator.file_digest(corpus_path)}")


@main.command("build-kb")
@click.option("--dict", "dictionary", required=True, type=click.Path(), help="name<TAB>category TSV.")
@click.option("--size", required=True, type=int, help="Sample size.")
@click.option("--seed", default=7, type=int, show_default=True)
@click.option("--provider", default="fallback", show_default=True, help="fallback | file:PATH | http:URL")
@click.option("--dim", default=256, type=int, show_default=True, help="Fallback embedder dimension.")
@click.option("--out", type=click.Path(), default=None, help="Snapshot file to write.")
def build_kb(dictionary: str, size: int, seed: int, provider: str, dim: int, out: str | None) -> None:
    """Sample the dictionary, attach embeddings, and print the index digest."""
    index = build_index(dictionary, size, seed, make_provider(provider, dim))
    if out:
        save_index(index, out)
        click.echo(f"snapshot: {out}")
    click.echo(f"entries: {len(index)}")
    click.echo(f"dim: {index.dim}")
    click.echo(f"digest: {index.digest}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", default="runs/extract", show_default=True, type=click.Path())
def extract(config_path: str, out_dir: str) -> None:
    """Stage 1 only: write candidates.jsonl."""
    config = load_config(config_path)
    corpus = load_corpus(config.corpus)
    templates = orchestrator.load_templates(config)
    gateway = build_gateway(config.gateway, default_cache_dir=Path(out_dir) / "llm_cache")
    warnings: list[str] = []
    candidates = orchestrator.extract_stage(config, corpus, gateway, templates, warnings)
    path = Path(out_dir) / "candidates.jsonl"
    orchestrator.write_candidates(candidates, path)
    orchestrator.write_stage_meta(path, config)
    click.echo(f"candidates: {len(candidates)} -> {path}")
    if warnings:
        click.echo(f"warnings: {len(warnings)}", err=True)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--strategy", default=None, help="Override the config strategy.")
@click.option("--candidates", "candidates_path", default=None, type=click.Path(),
              help="Stage-1 output (defaults to <out>/candidates.jsonl).")
@click.option("--out", "out_dir", default="runs/extract", show_default=True, type=click.Path())
def retype(config_path: str, strategy: str | None, candidates_path: str | None, out_dir: str) -> None:
    """Stage 2 only: type candidates, drop rejections, write predictions.jsonl."""
    config = load_config(config_path, {"strategy": strategy} if strategy else None)
    corpus = load_corpus(config.corpus)
    templates = orchestrator.load_templates(config)
    gateway = build_gateway(config.gateway, default_cache_dir=Path(out_dir) / "llm_cache")
    source = Path(candidates_path) if candidates_path else Path(out_dir) / "candidates.jsonl"
    if not source.exists():
        raise ValidationError(f"candidates file not found: {source} (run `extract` first)")
    candidates = orchestrator.read_candidates(source)
    warnings: list[str] = []
    predictions, _ = orchestrator.retype_stage(
        config, corpus, candidates, gateway, templates, warnings
    )
    path = Path(out_dir) / "predictions.jsonl"
    orchestrator.write_predictions(predictions, path)
    orchestrator.write_stage_meta(path, config)
    click.echo(f"predictions: {len(predictions)} -> {path}")


@main.command("evaluate")
@click.option("--gold", "gold_path", required=True, type=click.Path(), help="Corpus file with gold mentions.")
@click.option("--pred", "pred_path", required=True, type=click.Path(), help="Predictions JSONL.")
@click.option("--format", "fmt", default="tsv", type=click.Choice(["tsv", "markdown"]), show_default=True)
@click.option("--out", "out_dir", default=None, type=click.Path(),
              help="Also write report files (tsv, md, png) here.")
def evaluate_cmd(gold_path: str, pred_path: str, fmt: str, out_dir: str | None) -> None:
    """Strict-match scoring of a predictions file against gold mentions."""
    corpus = load_corpus(gold_path)
    predictions = orchestrator.read_predictions(pred_path, corpus)
    result = evaluate(
        list(corpus.mentions), predictions, corpus.entity_types, corpus.sentence_keys()
    )
    label = predictions[0].strategy if predictions else "predictions"
    report = {label: result}
    click.echo(render_report(report, fmt), nl=False)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.tsv").write_text(render_report(report, "tsv"), encoding="utf-8")
        (out / "report.md").write_text(render_report(report, "markdown"), encoding="utf-8")
        save_report_figure(report, out / "report.png")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", default=None, type=click.Path(),
              help="Output directory [default: runs/<config stem>].")
@click.option("--strategy", default=None, help="Override the config strategy.")
@click.option("--resume", is_flag=True, help="Reuse completed stage outputs of the same config.")
def run(config_path: str, out_dir: str | None, strategy: str | None, resume: bool) -> None:
    """Full pipeline: extract, retype, evaluate, report."""
    config = load_config(config_path, {"strategy": strategy} if strategy else None)
    out = Path(out_dir) if out_dir else Path("runs") / Path(config_path).stem
    outcome = run_pipeline(config, out, resume=resume)
    click.echo((out / "report.tsv").read_text(encoding="utf-8"), nl=False)
    click.echo(f"predictions: {outcome.predictions_path}")
    click.echo(f"manifest: {out / 'manifest.json'}")
    click.echo(f"output digest: {output_digest(out)}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--sizes", required=True, help="Comma-separated knowledge-base sizes.")
@click.option("--out", "out_dir", default=None, type=click.Path(),
              help="Output directory [default: runs/<config stem>-sweep].")
def sweep(config_path: str, sizes: str, out_dir: str | None) -> None:
    """Knowledge-base size ablation over kg-vote and kg-gpt."""
    try:
        size_list = [int(s) for s in sizes.split(",") if s.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad --sizes value {sizes!r}: {exc}") from exc
    if not size_list:
        raise ValidationError("--sizes must name at least one size")
    config = load_config(config_path)
    out = Path(out_dir) if out_dir else Path("runs") / f"{Path(config_path).stem}-sweep"
    ablation_sweep(config, size_list, out)
    click.echo((out / "sweep.tsv").read_text(encoding="utf-8"), nl=False)


if __name__ == "__main__":
    main()
