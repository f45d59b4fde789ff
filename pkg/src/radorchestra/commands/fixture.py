"""Fixture command for radorchestra CLI"""

from pathlib import Path

import click

from ..common.jsonl import write_text_atomic
from ..ingest import FIXTURE_DIMS, generate_fixture_corpus, split_counts
from .common import emit

FIXTURE_CONFIG = "config.toml"

_CONFIG_TEMPLATE = """\
# Hermetic mock configuration for the fixture corpus
[run]
query_embeddings = "{sidecar}"

[backends.mock]
kind = "mock"
seed = {seed}
dims = {dims}
"""


@click.command()
@click.option("--seed", type=int, default=7, show_default=True, help="Seed of the generator")
@click.option("--n", "n", type=click.IntRange(min=2), default=20, show_default=True, help="Number of studies")
@click.option("--dims", type=click.IntRange(min=8), default=FIXTURE_DIMS, show_default=True, help="Embedding dimensionality")
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    required=True,
    help="Directory for manifest.jsonl, embeddings.jsonl, images/ and config.toml",
)
@click.pass_context
def fixture(ctx: click.Context, seed: int, n: int, dims: int, out_dir: Path) -> None:
    """Generate a deterministic synthetic corpus

    Reports come from a few template families and the embedding sidecar
    points same-family studies in the same direction, so retrieval finds
    relevant context by construction.
    """
    corpus = generate_fixture_corpus(seed, n, out_dir, dims=dims)
    config_path = out_dir / FIXTURE_CONFIG
    write_text_atomic(config_path, _CONFIG_TEMPLATE.format(sidecar=corpus.sidecar.name, seed=seed, dims=dims))

    n_train, n_test = split_counts(corpus.studies)
    emit(
        ctx,
        {
            "manifest": str(corpus.manifest),
            "sidecar": str(corpus.sidecar),
            "config": str(config_path),
            "train": n_train,
            "test": n_test,
        },
        f"[bold green]✓[/bold green] Fixture corpus in [cyan]{out_dir}[/cyan]: "
        f"{n_train} train / {n_test} test studies, config [cyan]{config_path}[/cyan]",
    )
