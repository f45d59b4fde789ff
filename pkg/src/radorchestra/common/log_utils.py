"""
Logging utilities for radorchestra

Provides consistent log formatting and truncation of long values such as
prompts, completions and embedding vectors.
"""

import json
import logging
import sys
from typing import Any, List, Optional, Tuple

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s"

ROOT_LOGGER = "radorchestra"


class TruncatingFormatter(logging.Formatter):
    """Formatter that truncates the message part of long log lines"""

    def __init__(
        self,
        *args: Any,
        max_length: int = 200,
        truncate_enabled: bool = True,
        **kwargs: Any,
    ) -> None:
        super().__init__(*args, **kwargs)
        self.max_length = max_length
        self.truncate_enabled = truncate_enabled

    def format(self, record: logging.LogRecord) -> str:
        msg = super().format(record)

        if self.truncate_enabled and len(msg) > self.max_length:
            # timestamp - name - level - func:line - message
            parts = msg.split(" - ", 4)
            if len(parts) >= 5:
                prefix = " - ".join(parts[:4])
                message = parts[4]
                if len(message) > self.max_length:
                    msg = f"{prefix} - {message[: self.max_length]}... [truncated]"

        return msg


def truncate_value(value: Any, max_length: int = 100) -> str:
    """Render a value for logging, truncated if necessary

    Args:
        value: Value to render (prompt text, dict, vector, ...)
        max_length: Maximum length before truncation

    Returns:
        String representation of value, truncated if necessary
    """
    if value is None:
        return "None"

    if isinstance(value, str):
        if len(value) > max_length:
            return f"{value[:max_length]}... [{len(value)} chars total]"
        return value

    if isinstance(value, (dict, list, tuple)):
        try:
            json_str = json.dumps(value)
        except (TypeError, ValueError):
            json_str = str(value)
        if len(json_str) > max_length:
            unit = "keys" if isinstance(value, dict) else "items"
            return f"{json_str[:max_length]}... [{len(value)} {unit} total]"
        return json_str

    str_val = str(value)
    if len(str_val) > max_length:
        return f"{str_val[:max_length]}... [{len(str_val)} chars total]"
    return str_val


def setup_logger(
    name: str = ROOT_LOGGER,
    log_file: Optional[str] = None,
    level: int = logging.INFO,
    truncate: bool = True,
    max_length: int = 200,
    stream: bool = True,
    replace: bool = False,
) -> logging.Logger:
    """Set up a logger with consistent formatting and truncation

    Args:
        name: Logger name; module loggers under radorchestra.* inherit it
        log_file: Optional path of a log file opened in append mode
        level: Logging level
        truncate: Whether to enable truncation
        max_length: Maximum message length before truncation
        stream: Whether to also log to stderr
        replace: Drop handlers installed by an earlier call first

    Returns:
        Configured logger
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)

    if replace:
        for handler in list(logger.handlers):
            logger.removeHandler(handler)
            handler.close()

    # Only add handlers once per process
    if not logger.handlers:
        formatter = TruncatingFormatter(LOG_FORMAT, max_length=max_length, truncate_enabled=truncate)
        if stream:
            stream_handler = logging.StreamHandler(sys.stderr)
            stream_handler.setLevel(level)
            stream_handler.setFormatter(formatter)
            logger.addHandler(stream_handler)
        if log_file:
            file_handler = logging.FileHandler(log_file, mode="a")
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)
    else:
        for handler in logger.handlers:
            if isinstance(handler, logging.StreamHandler) and not isinstance(handler, logging.FileHandler):
                handler.setLevel(level)

    return logger


class LogContext:
    """Context manager for temporarily disabling truncation"""

    def __init__(self, logger: logging.Logger, truncate: bool = False) -> None:
        self.logger = logger
        self.truncate = truncate
        self.original_formatters: List[Tuple[logging.Handler, bool]] = []

    def __enter__(self) -> "LogContext":
        for handler in self.logger.handlers:
            formatter = handler.formatter
            if isinstance(formatter, TruncatingFormatter):
                self.original_formatters.append((handler, formatter.truncate_enabled))
                formatter.truncate_enabled = self.truncate
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        for handler, original_setting in self.original_formatters:
            if isinstance(handler.formatter, TruncatingFormatter):
                handler.formatter.truncate_enabled = original_setting
