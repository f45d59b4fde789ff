"""
Comparison tables: lexical metrics per model and judge axis means per model
"""

from typing import Dict, List, Optional, Sequence, Tuple

from rich.table import Table

from .judge import AXES, AXIS_LABELS, JudgeSummary
from .metrics.evaluate import METRIC_KEYS, MetricReport

METRIC_COLUMNS: Tuple[Tuple[str, str], ...] = (
    ("bleu", "BLEU"),
    ("rouge1_f", "ROUGE-1"),
    ("rouge2_f", "ROUGE-2"),
    ("rougeL_f", "ROUGE-L"),
    ("meteor", "METEOR"),
    ("bertscore_f1", "BERTScore"),
)
JUDGE_COLUMNS: Tuple[Tuple[str, str], ...] = tuple((axis, AXIS_LABELS[axis]) for axis in AXES)

assert tuple(key for key, _ in METRIC_COLUMNS) == METRIC_KEYS

Row = Tuple[str, List[str]]


def metric_rows(reports: Sequence[MetricReport]) -> List[Row]:
    return [
        (report.model, [_fmt(report.corpus.get(key), 4) for key, _ in METRIC_COLUMNS])
        for report in reports
    ]


def judge_rows(summary: JudgeSummary) -> List[Row]:
    return [
        (name, [_fmt(model.means.get(axis), 2) for axis, _ in JUDGE_COLUMNS])
        for name, model in summary.models.items()
    ]


def _fmt(value: Optional[float], digits: int) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def rich_table(title: str, columns: Sequence[Tuple[str, str]], rows: Sequence[Row]) -> Table:
    table = Table(title=title, show_header=True, header_style="bold magenta")
    table.add_column("Model", style="cyan")
    for _, label in columns:
        table.add_column(label, justify="right")
    for model, cells in rows:
        table.add_row(model, *cells)
    return table


def plain_table(title: str, columns: Sequence[Tuple[str, str]], rows: Sequence[Row]) -> str:
    header = ["Model", *(label for _, label in columns)]
    body = [[model, *cells] for model, cells in rows]
    widths = [max(len(line[i]) for line in [header, *body]) for i in range(len(header))]

    def render(line: Sequence[str]) -> str:
        first = line[0].ljust(widths[0])
        rest = [cell.rjust(width) for cell, width in zip(line[1:], widths[1:])]
        return "  ".join([first, *rest]).rstrip()

    rule = "-" * len(render(header))
    return "\n".join([title, rule, render(header), rule, *(render(line) for line in body), rule]) + "\n"


def comparison_tables(
    reports: Sequence[MetricReport],
    judge: Optional[JudgeSummary] = None,
) -> Dict[str, Tuple[Table, str]]:
    """Rich and plain renderings keyed by "metrics" and "judge" """
    tables: Dict[str, Tuple[Table, str]] = {}
    if reports:
        title = "Quantitative comparison"
        rows = metric_rows(reports)
        tables["metrics"] = (rich_table(title, METRIC_COLUMNS, rows), plain_table(title, METRIC_COLUMNS, rows))
    if judge is not None and judge.models:
        title = "Judge comparison (1-10)"
        rows = judge_rows(judge)
        tables["judge"] = (rich_table(title, JUDGE_COLUMNS, rows), plain_table(title, JUDGE_COLUMNS, rows))
    return tables
