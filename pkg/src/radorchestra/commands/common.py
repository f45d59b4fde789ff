"""Helpers shared by the radorchestra commands"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

import click
from rich.console import Console

from ..common.config import RunConfig, load_config

console = Console()
err_console = Console(stderr=True)


@dataclass
class CliState:
    """Global options, stored on the click context"""

    json_output: bool = False


def state(ctx: click.Context) -> CliState:
    obj = ctx.find_object(CliState)
    return obj if obj is not None else CliState()


def emit(ctx: click.Context, payload: Dict[str, Any], message: str) -> None:
    """Print a JSON document with --json, else a rich status line"""
    if state(ctx).json_output:
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
    else:
        console.print(message)


def resolve_config(path: Optional[Path]) -> RunConfig:
    return load_config(path) if path is not None else RunConfig()


config_option = click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Run configuration TOML file (built-in mock defaults when omitted)",
)
