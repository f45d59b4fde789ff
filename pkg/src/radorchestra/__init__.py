"""radorchestra - retrieval-augmented multi-agent radiology report generation"""

__version__ = "0.1.0"

from .cli import main  # noqa: E402

__all__ = ["__version__", "main"]
