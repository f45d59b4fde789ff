"""Index commands for radorchestra CLI"""

from pathlib import Path
from typing import Optional

import click

from ..backends.registry import BackendRegistry
from ..common.errors import ConfigError
from ..common.types import Split
from ..ingest import build_retrieval_db, load_manifest, read_sidecar
from ..retrieval import load_index, persist_index
from .common import config_option, emit, resolve_config


@click.group()
def index() -> None:
    """Build and inspect the retrieval index of training reports"""


@index.command()
@click.option(
    "--manifest",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
    help="Dataset manifest JSONL; only train-split studies are indexed",
)
@click.option(
    "--sidecar",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Precomputed embedding sidecar JSONL (report vectors)",
)
@click.option(
    "--embed-backend",
    "embed_backend",
    default=None,
    help="Backend id that embeds the reports live (e.g. mock)",
)
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), required=True, help="Index file to write")
@click.option("--workers", type=click.IntRange(min=1), default=4, show_default=True, help="Parallel embedding calls")
@config_option
@click.pass_context
def build(
    ctx: click.Context,
    manifest: Path,
    sidecar: Optional[Path],
    embed_backend: Optional[str],
    out_path: Path,
    workers: int,
    config_path: Optional[Path],
) -> None:
    """Build the index from a sidecar or by embedding reports live"""
    if (sidecar is None) == (embed_backend is None):
        raise ConfigError("give exactly one of --sidecar or --embed-backend")

    studies = load_manifest(manifest)
    train = [s for s in studies if s.split is Split.TRAIN]
    if sidecar is not None:
        db = build_retrieval_db(train, sidecar=read_sidecar(sidecar), workers=workers)
    else:
        config = resolve_config(config_path)
        with BackendRegistry.from_config(config) as registry:
            db = build_retrieval_db(train, embedding_backend=registry.get(embed_backend), workers=workers)

    persist_index(db, out_path)
    emit(
        ctx,
        {"index": str(out_path), "dims": db.dims, "count": len(db), "corpus_digest": db.built_from},
        f"[bold green]✓[/bold green] Indexed {len(db)} training reports (dims={db.dims}) into [cyan]{out_path}[/cyan]",
    )


@index.command()
@click.option("--index", "index_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True, help="Index file")
@click.pass_context
def info(ctx: click.Context, index_path: Path) -> None:
    """Show dimensionality, size and corpus digest of an index"""
    db = load_index(index_path)
    emit(
        ctx,
        {"index": str(index_path), "dims": db.dims, "count": len(db), "corpus_digest": db.built_from},
        f"[bold]Index[/bold] [cyan]{index_path}[/cyan]\n"
        f"  dims:          {db.dims}\n"
        f"  entries:       {len(db)}\n"
        f"  corpus digest: [dim]{db.built_from}[/dim]",
    )
