"""
JSON / JSONL persistence helpers

Whole-file writes go through a temp file and an atomic rename. Appends use
a single write() per line on an O_APPEND descriptor under a lock, so a
killed process leaves only complete lines behind.
"""

import json
import logging
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Union

from .errors import DataError, IoError
from .text import canonical_json

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass(frozen=True)
class LineDiagnostic:
    """A JSONL line that could not be decoded"""

    path: str
    line: int
    reason: str

    def __str__(self) -> str:
        return f"{self.path}:{self.line}: {self.reason}"


def encode_line(record: Dict[str, Any]) -> str:
    return canonical_json(record) + "\n"


def iter_jsonl(path: PathLike) -> Iterator[tuple[int, Optional[Dict[str, Any]], Optional[str]]]:
    """Yield (line_number, record, error) for every non-blank line"""
    path = Path(path)
    try:
        with path.open("rb") as f:
            for line_no, data in enumerate(f, start=1):
                if not data.strip():
                    continue
                if not data.endswith(b"\n"):
                    # A final line without newline is an interrupted append
                    yield line_no, None, "truncated line (missing newline)"
                    continue
                try:
                    raw = data.decode("utf-8")
                except UnicodeDecodeError:
                    yield line_no, None, "invalid UTF-8"
                    continue
                try:
                    record = json.loads(raw)
                except json.JSONDecodeError as e:
                    yield line_no, None, f"invalid JSON: {e.msg}"
                    continue
                if not isinstance(record, dict):
                    yield line_no, None, "record is not a JSON object"
                    continue
                yield line_no, record, None
    except OSError as e:
        raise IoError(path, e) from e


def write_jsonl(path: PathLike, records: Iterable[Dict[str, Any]]) -> None:
    """Write a complete JSONL file atomically"""
    write_text_atomic(path, "".join(encode_line(r) for r in records))


def write_json(path: PathLike, data: Any) -> None:
    write_text_atomic(path, json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def read_json(path: PathLike) -> Any:
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise IoError(path, e) from e
    except json.JSONDecodeError as e:
        raise DataError(f"invalid JSON in {path}: {e}") from e


def write_text_atomic(path: PathLike, text: str) -> None:
    path = Path(path)
    temp_path = path.with_suffix(path.suffix + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with temp_path.open("w", encoding="utf-8") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        temp_path.replace(path)
    except OSError as e:
        raise IoError(path, e) from e


class AppendOnlyWriter:
    """Thread-safe, line-atomic appender for JSONL files"""

    def __init__(self, path: PathLike, truncate: bool = False) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()
        flags = os.O_WRONLY | os.O_CREAT | os.O_APPEND
        if truncate:
            flags |= os.O_TRUNC
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fd: Optional[int] = os.open(self.path, flags, 0o644)
            if not truncate:
                self._terminate_partial_line()
        except OSError as e:
            raise IoError(self.path, e) from e

    def _terminate_partial_line(self) -> None:
        """Start on a fresh line if an interrupted writer left a partial one"""
        with self.path.open("rb") as f:
            f.seek(0, os.SEEK_END)
            if f.tell() == 0:
                return
            f.seek(-1, os.SEEK_END)
            last = f.read(1)
        if last != b"\n":
            assert self._fd is not None
            os.write(self._fd, b"\n")
            logger.warning(f"{self.path} ended with a partial line; it will be reported as corrupt")

    def append(self, record: Dict[str, Any]) -> None:
        data = encode_line(record).encode("utf-8")
        with self._lock:
            if self._fd is None:
                msg = f"writer for {self.path} is closed"
                raise ValueError(msg)
            try:
                view = memoryview(data)
                written = 0
                while written < len(data):
                    written += os.write(self._fd, view[written:])
                os.fsync(self._fd)
            except OSError as e:
                raise IoError(self.path, e) from e

    def close(self) -> None:
        with self._lock:
            if self._fd is not None:
                os.close(self._fd)
                self._fd = None

    def __enter__(self) -> "AppendOnlyWriter":
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        self.close()


def load_records(path: PathLike) -> tuple[List[Dict[str, Any]], List[LineDiagnostic]]:
    """Read a JSONL file, collecting decode failures instead of raising"""
    records: List[Dict[str, Any]] = []
    diagnostics: List[LineDiagnostic] = []
    for line_no, record, error in iter_jsonl(path):
        if error is not None:
            diagnostics.append(LineDiagnostic(str(path), line_no, error))
            logger.warning(f"Skipping {path}:{line_no}: {error}")
        else:
            records.append(record)  # type: ignore[arg-type]
    return records, diagnostics
