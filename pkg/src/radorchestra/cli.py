#!/usr/bin/env python3
"""
radorchestra CLI - retrieval-augmented multi-agent report generation

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 backend or pipeline error.
"""

import json
import logging
from pathlib import Path
from typing import Any, List, Optional

import click

from . import __version__
from .commands.common import CliState, err_console
from .commands.eval_cmd import eval_command
from .commands.fixture import fixture
from .commands.index import index
from .commands.judge import judge
from .commands.report import report
from .commands.run import run
from .common.errors import RadOrchestraError
from .common.log_utils import LogContext, setup_logger

USAGE_EXIT_CODE = 1
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def _json_mode(ctx: click.Context) -> bool:
    state = ctx.find_object(CliState)
    return state is not None and state.json_output


class RadOrchestraGroup(click.Group):
    """Group that maps radorchestra errors and usage errors to exit codes"""

    def parse_args(self, ctx: click.Context, args: List[str]) -> List[str]:
        try:
            return super().parse_args(ctx, args)
        except click.UsageError as e:
            e.exit_code = USAGE_EXIT_CODE
            raise

    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            e.exit_code = USAGE_EXIT_CODE
            if _json_mode(ctx):
                click.echo(json.dumps({"type": "UsageError", "message": e.format_message()}), err=True)
            raise
        except RadOrchestraError as e:
            if _json_mode(ctx):
                click.echo(json.dumps(e.to_dict(), sort_keys=True), err=True)
            else:
                err_console.print(f"[bold red]Error:[/bold red] {e}")
            logging.getLogger(__name__).debug("command failed", exc_info=True)
            ctx.exit(e.exit_code)


@click.group(cls=RadOrchestraGroup, invoke_without_command=True)
@click.version_option(version=__version__, prog_name="radorchestra")
@click.option("--json", "json_output", is_flag=True, default=False, help="Print machine-readable JSON; errors go to stderr as JSON")
@click.option(
    "--log-level",
    type=click.Choice(LOG_LEVELS, case_sensitive=False),
    default="INFO",
    show_default=True,
    help="Level of log lines written to stderr",
)
@click.option(
    "--log-file",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Also append log lines to this file",
)
@click.pass_context
def cli(ctx: click.Context, json_output: bool, log_level: str, log_file: Optional[Path]) -> None:
    """radorchestra - retrieval-augmented radiology report generation

    Workflow: fixture → index build → run → eval → judge → report.
    Run configuration is one TOML file (see README); flags override it.
    """
    ctx.obj = CliState(json_output=json_output)
    level = getattr(logging, log_level.upper())
    root_logger = setup_logger(
        log_file=str(log_file) if log_file else None,
        level=level,
        replace=True,
    )
    if level <= logging.DEBUG:
        # full prompts and completions while debugging
        ctx.with_resource(LogContext(root_logger))
    if ctx.invoked_subcommand is None:
        # Show help if no command is provided
        click.echo(ctx.get_help())


# Register commands
cli.add_command(fixture)
cli.add_command(index)
cli.add_command(run)
cli.add_command(eval_command, name="eval")
cli.add_command(judge)
cli.add_command(report)


def main() -> None:
    """Main entry point for the CLI"""
    cli()


if __name__ == "__main__":
    main()
