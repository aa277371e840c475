"""embed-bridge CLI: serve embeddings over HTTP or export them to a file."""

from __future__ import annotations

import logging
import sys

import click

from .encoders import load_encoder
from .export import export_file
from .service import DEFAULT_MAX_BATCH, create_app


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose: bool) -> None:
    """Biomedical name embeddings: HTTP service and file export."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.option("--model", "model_id", required=True, help="HF checkpoint id, or test:<dim>.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8601, type=int, show_default=True)
@click.option("--max-batch", default=DEFAULT_MAX_BATCH, type=int, show_default=True)
@click.option("--pooling", default="first", type=click.Choice(["first", "mean"]), show_default=True)
def serve(model_id: str, host: str, port: int, max_batch: int, pooling: str) -> None:
    """Run the embedding service."""
    import uvicorn

    try:
        encoder = load_encoder(model_id, pooling=pooling)
    except Exception as exc:
        click.echo(f"error: cannot load model {model_id!r}: {exc}", err=True)
        sys.exit(1)
    click.echo(f"serving {model_id} (dim {encoder.dim}) on {host}:{port}")
    uvicorn.run(create_app(encoder, max_batch), host=host, port=port, log_level="warning")


@main.command()
@click.option("--dict", "dictionary", required=True, type=click.Path(), help="name<TAB>category TSV.")
@click.option("--out", required=True, type=click.Path(), help="JSON-lines output file.")
@click.option("--model", "model_id", required=True, help="HF checkpoint id, or test:<dim>.")
@click.option("--batch-size", default=64, type=int, show_default=True)
@click.option("--pooling", default="first", type=click.Choice(["first", "mean"]), show_default=True)
def export(dictionary: str, out: str, model_id: str, batch_size: int, pooling: str) -> None:
    """Write precomputed embeddings for every dictionary name."""
    try:
        encoder = load_encoder(model_id, pooling=pooling)
    except Exception as exc:
        click.echo(f"error: cannot load model {model_id!r}: {exc}", err=True)
        sys.exit(1)
    try:
        written = export_file(dictionary, out, encoder, batch_size=batch_size)
    except (OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"wrote {written} embeddings (dim {encoder.dim}) to {out}")


if __name__ == "__main__":
    main()
