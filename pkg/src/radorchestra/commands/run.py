"""Run command for radorchestra CLI"""

from pathlib import Path
from typing import Optional

import click

from ..common.errors import ConfigError, DataError, PipelineError
from ..common.types import Mode, Split
from ..ingest import load_manifest
from ..orchestrator import SUMMARY_FILE, TRACES_FILE, run_corpus
from ..retrieval import load_index
from .common import config_option, console, emit, resolve_config, state

SPLIT_SELECTIONS = {
    "test": frozenset({Split.TEST}),
    "train": frozenset({Split.TRAIN}),
    "all": frozenset(Split),
}


@click.command()
@click.option(
    "--manifest",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
    help="Dataset manifest JSONL",
)
@click.option(
    "--index",
    "index_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Retrieval index (required unless --mode vision_only)",
)
@click.option(
    "--split",
    "split",
    type=click.Choice(sorted(SPLIT_SELECTIONS)),
    default="test",
    show_default=True,
    help="Manifest studies to run; indexed studies never retrieve their own report",
)
@config_option
@click.option("--mode", type=click.Choice([m.value for m in Mode]), default=None, help="Pipeline mode (overrides config)")
@click.option("--k", "k", type=click.IntRange(min=1), default=None, help="Reports to retrieve (overrides config)")
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=None, help="Output directory (overrides config)")
@click.option("--resume/--no-resume", default=None, help="Skip studies that already have a trace for this configuration")
@click.option("--concurrency", type=click.IntRange(min=1), default=None, help="Studies processed at once (overrides config)")
@click.option("--serial", is_flag=True, default=False, help="Run the vision branch after the text branch instead of alongside it")
@click.option(
    "--query-embeddings",
    "query_embeddings",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Sidecar JSONL with image query vectors (overrides config)",
)
@click.pass_context
def run(
    ctx: click.Context,
    manifest: Path,
    index_path: Optional[Path],
    split: str,
    config_path: Optional[Path],
    mode: Optional[str],
    k: Optional[int],
    out_dir: Optional[Path],
    resume: Optional[bool],
    concurrency: Optional[int],
    serial: bool,
    query_embeddings: Optional[Path],
) -> None:
    """Generate reports for the selected split of a manifest

    Each finished study appends one trace to traces.jsonl in the output
    directory; summary.json and the resolved config.json are written too.
    Exits with code 3 when any study failed.
    """
    config = resolve_config(config_path).with_overrides(
        mode=mode,
        k=k,
        output_dir=out_dir,
        resume=resume,
        concurrency=concurrency,
        parallel_branches=False if serial else None,
        query_embeddings=query_embeddings,
    )
    if config.mode.needs_index and index_path is None:
        raise ConfigError(f"mode {config.mode.value} needs --index")

    studies = [s for s in load_manifest(manifest) if s.split in SPLIT_SELECTIONS[split]]
    if not studies:
        raise DataError(f"manifest {manifest} has no {split}-split studies")
    db = load_index(index_path) if config.mode.needs_index and index_path is not None else None

    summary = run_corpus(studies, db, config)
    out = config.output_dir
    emit(
        ctx,
        {**summary.to_dict(), "traces": str(out / TRACES_FILE), "summary": str(out / SUMMARY_FILE)},
        f"[bold green]✓[/bold green] {config.mode.value}: {summary.studies_succeeded}/{summary.studies_total} studies "
        f"succeeded ({summary.studies_resumed} resumed) → [cyan]{out / TRACES_FILE}[/cyan]",
    )
    if not summary.ok:
        if not state(ctx).json_output:
            for failure in summary.failures:
                console.print(
                    f"  [red]✗[/red] {failure.study_id} [yellow]{failure.stage or 'input'}[/yellow]: "
                    f"{failure.error_type}: {failure.message}"
                )
        raise PipelineError(f"{summary.studies_failed} of {summary.studies_total} studies failed", failed=summary.studies_failed)
