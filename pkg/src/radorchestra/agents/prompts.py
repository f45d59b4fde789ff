"""
Prompt library backed by versioned Jinja2 templates

Each role has a `<role>.system.md.j2` and a `<role>.user.md.j2` template
under templates/<version>/. Rendering is a pure function of the slots.
"""

from functools import lru_cache
from pathlib import Path
from typing import Any, Optional, Tuple

from jinja2 import Environment, FileSystemLoader, StrictUndefined, TemplateNotFound, UndefinedError

from ..common.config import PROMPT_SET_VERSION
from ..common.errors import ConfigError

TEMPLATE_ROOT = Path(__file__).parent / "templates"


class PromptLibrary:
    """Renders (system_prompt, user_prompt) pairs for each agent role"""

    def __init__(self, version: str = PROMPT_SET_VERSION, template_root: Optional[Path] = None) -> None:
        template_dir = (template_root or TEMPLATE_ROOT) / version
        if not template_dir.is_dir():
            raise ConfigError(f"prompt set {version!r} not found in {template_dir.parent}")
        self.version = version
        self.jinja_env = Environment(
            loader=FileSystemLoader(str(template_dir)),
            trim_blocks=True,
            lstrip_blocks=True,
            undefined=StrictUndefined,
            autoescape=False,
        )

    def render_template(self, template_name: str, **slots: Any) -> str:
        try:
            template = self.jinja_env.get_template(template_name)
            return template.render(**slots).strip()
        except TemplateNotFound as e:
            raise ConfigError(f"prompt template {template_name!r} missing from set {self.version!r}") from e
        except UndefinedError as e:
            raise ConfigError(f"prompt template {template_name!r}: {e.message}") from e

    def render(self, role: str, **slots: Any) -> Tuple[str, str]:
        return (
            self.render_template(f"{role}.system.md.j2", **slots),
            self.render_template(f"{role}.user.md.j2", **slots),
        )


@lru_cache(maxsize=4)
def prompt_library(version: str = PROMPT_SET_VERSION) -> PromptLibrary:
    return PromptLibrary(version)
