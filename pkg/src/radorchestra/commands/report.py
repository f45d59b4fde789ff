"""Report command for radorchestra CLI"""

from pathlib import Path
from typing import List, Optional, Tuple

import click

from ..common.errors import DataError
from ..common.jsonl import read_json, write_text_atomic
from ..judge import JudgeSummary
from ..metrics import MetricReport
from ..tables import comparison_tables
from .common import console, emit, state
from .eval_cmd import METRICS_FILE
from .judge import JUDGE_FILE


def _resolve(path: Path, filename: str) -> Path:
    return path / filename if path.is_dir() else path


@click.command()
@click.option(
    "--metrics",
    "metrics_paths",
    type=click.Path(exists=True, path_type=Path),
    multiple=True,
    required=True,
    help="metrics.json or its eval directory; repeat per model, rows keep this order",
)
@click.option(
    "--judge",
    "judge_path",
    type=click.Path(exists=True, path_type=Path),
    default=None,
    help="judge.json or its directory",
)
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), required=True, help="Plain-text file for the tables")
@click.pass_context
def report(ctx: click.Context, metrics_paths: Tuple[Path, ...], judge_path: Optional[Path], out_path: Path) -> None:
    """Render the metric and judge comparison tables side by side"""
    reports: List[MetricReport] = [MetricReport.from_dict(read_json(_resolve(p, METRICS_FILE))) for p in metrics_paths]
    names = [r.model for r in reports]
    duplicates = sorted({n for n in names if names.count(n) > 1})
    if duplicates:
        raise DataError(f"several metrics files are labeled {duplicates}; rerun eval with --model")
    summary = JudgeSummary.from_dict(read_json(_resolve(judge_path, JUDGE_FILE))) if judge_path else None

    tables = comparison_tables(reports, summary)
    write_text_atomic(out_path, "\n".join(plain for _, plain in tables.values()))

    payload = {
        "out": str(out_path),
        "metrics": {r.model: dict(r.corpus) for r in reports},
        "judge": {name: dict(m.means) for name, m in summary.models.items()} if summary else None,
    }
    if state(ctx).json_output:
        emit(ctx, payload, "")
        return
    for rich_table, _ in tables.values():
        console.print(rich_table)
    console.print(f"[bold green]✓[/bold green] Tables written to [cyan]{out_path}[/cyan]")
