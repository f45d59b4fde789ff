"""Eval command for radorchestra CLI"""

from pathlib import Path
from typing import Optional

import click

from ..backends.registry import BackendRegistry
from ..common.errors import DataError
from ..common.jsonl import LineDiagnostic, write_json, write_text_atomic
from ..metrics import evaluate_corpus, load_references
from ..orchestrator import load_traces
from ..tables import comparison_tables
from .common import config_option, console, emit, resolve_config, state

METRICS_FILE = "metrics.json"
METRICS_TABLE_FILE = "metrics.txt"


def model_name_for(traces: Path) -> str:
    """Run directory name, or the parent directory of a traces file"""
    return traces.name if traces.is_dir() else traces.parent.name or traces.stem


@click.command(name="eval")
@click.option(
    "--traces",
    type=click.Path(exists=True, path_type=Path),
    required=True,
    help="Run directory or traces.jsonl",
)
@click.option(
    "--refs",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
    help="References JSONL ({study_id, reference_report}) or the dataset manifest",
)
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), required=True, help="Directory for metrics.json and metrics.txt")
@click.option("--model", default=None, help="Row label in comparison tables (defaults to the run directory name)")
@click.option("--bertscore/--no-bertscore", default=True, show_default=True, help="Score BERTScore with the configured embedding backend")
@click.option("--workers", type=click.IntRange(min=1), default=4, show_default=True, help="Parallel scoring threads")
@config_option
@click.pass_context
def eval_command(
    ctx: click.Context,
    traces: Path,
    refs: Path,
    out_dir: Path,
    model: Optional[str],
    bertscore: bool,
    workers: int,
    config_path: Optional[Path],
) -> None:
    """Score final reports with BLEU, ROUGE, METEOR and BERTScore"""
    config = resolve_config(config_path)
    diagnostics: list[LineDiagnostic] = []
    loaded = load_traces(traces, diagnostics)
    if not loaded:
        raise DataError(f"no valid traces in {traces}")
    references = load_references(refs)
    name = model or model_name_for(traces)

    with BackendRegistry.from_config(config) as registry:
        embedder = registry.for_role("embedding") if bertscore else None
        report = evaluate_corpus(
            loaded,
            references,
            embedding_backend=embedder,
            model=name,
            alarm_rate=config.alarm_rate,
            workers=workers,
        )

    payload = report.to_dict()
    payload["skipped_lines"] = [str(d) for d in diagnostics]
    write_json(out_dir / METRICS_FILE, payload)
    rich_table, plain = comparison_tables([report])["metrics"]
    write_text_atomic(out_dir / METRICS_TABLE_FILE, plain)

    if state(ctx).json_output:
        emit(ctx, payload, "")
        return
    console.print(rich_table)
    if report.grounding is not None:
        for stage in report.grounding.alarms:
            console.print(f"[bold yellow]⚠ {stage} flagged {report.grounding.rate(stage):.1%} of sentences[/bold yellow]")
    if diagnostics:
        console.print(f"[yellow]Skipped {len(diagnostics)} unreadable trace lines[/yellow]")
    console.print(f"[bold green]✓[/bold green] Metrics written to [cyan]{out_dir / METRICS_FILE}[/cyan]")
