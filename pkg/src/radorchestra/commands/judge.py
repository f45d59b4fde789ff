"""Judge command for radorchestra CLI"""

from pathlib import Path
from typing import Dict, List, Optional, Tuple

import click

from ..backends.registry import BackendRegistry
from ..common.errors import ConfigError, DataError
from ..common.jsonl import write_json, write_text_atomic
from ..judge import judge_corpus
from ..metrics import load_references
from ..orchestrator import load_traces
from ..tables import comparison_tables
from .common import config_option, console, emit, resolve_config, state
from .eval_cmd import model_name_for

JUDGE_FILE = "judge.json"
JUDGE_TABLE_FILE = "judge.txt"


def parse_named_paths(values: Tuple[str, ...]) -> Dict[str, Path]:
    """NAME=PATH pairs; a bare PATH is named after its run directory"""
    named: Dict[str, Path] = {}
    for value in values:
        name, sep, raw = value.partition("=")
        path = Path(raw if sep else value)
        if not path.exists():
            raise DataError(f"traces not found: {path}")
        label = name if sep else model_name_for(path)
        if label in named:
            raise ConfigError(f"model name {label!r} given twice; use NAME=PATH")
        named[label] = path
    return named


@click.command()
@click.option(
    "--traces",
    "traces",
    multiple=True,
    required=True,
    help="NAME=PATH of a run directory or traces.jsonl; repeat per model",
)
@click.option(
    "--refs",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
    help="References JSONL or the dataset manifest",
)
@click.option("--backend", "backend_id", default=None, help="Judge backend id (defaults to the config's judge binding)")
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), required=True, help="Directory for judge.json and judge.txt")
@click.option("--workers", type=click.IntRange(min=1), default=4, show_default=True, help="Parallel judge calls")
@config_option
@click.pass_context
def judge(
    ctx: click.Context,
    traces: Tuple[str, ...],
    refs: Path,
    backend_id: Optional[str],
    out_dir: Path,
    workers: int,
    config_path: Optional[Path],
) -> None:
    """Rate final reports against references on the five-axis rubric"""
    config = resolve_config(config_path)
    trace_sets = {name: load_traces(path) for name, path in parse_named_paths(traces).items()}
    references = load_references(refs)

    with BackendRegistry.from_config(config) as registry:
        backend = registry.get(backend_id) if backend_id else registry.for_role("judge")
        summary = judge_corpus(
            trace_sets,
            references,
            backend,
            max_tokens=config.tokens_for("judge"),
            workers=workers,
        )

    write_json(out_dir / JUDGE_FILE, summary.to_dict())
    rich_table, plain = comparison_tables([], summary)["judge"]
    write_text_atomic(out_dir / JUDGE_TABLE_FILE, plain)

    failed: List[str] = [f"{j.model}/{j.study_id}" for j in summary.judgements if j.error is not None]
    if state(ctx).json_output:
        emit(ctx, summary.to_dict(), "")
        return
    console.print(rich_table)
    console.print(
        f"[bold green]✓[/bold green] Judged {len(summary.judgements) - len(failed)} reports "
        f"({len(failed)} failed) → [cyan]{out_dir / JUDGE_FILE}[/cyan]"
    )
    for item in failed:
        console.print(f"  [yellow]unscored[/yellow] {item}")
