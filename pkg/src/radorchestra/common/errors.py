"""
Error types for radorchestra

Every failure the pipeline can surface is a subclass of RadOrchestraError.
The category classes (DataError, BackendError, ConfigError, PipelineError)
decide the command line exit code.
"""

from typing import Any, Dict, Optional


class RadOrchestraError(Exception):
    """Base class for all radorchestra errors"""

    exit_code = 2

    def __init__(self, message: str, **fields: Any) -> None:
        super().__init__(message)
        self.message = message
        self.fields = fields

    def to_dict(self) -> Dict[str, Any]:
        """Machine-readable form, used for --json error output"""
        payload: Dict[str, Any] = {"type": type(self).__name__, "message": self.message}
        for key, value in self.fields.items():
            payload[key] = value if isinstance(value, (str, int, float, bool)) or value is None else str(value)
        return payload


class ConfigError(RadOrchestraError):
    """Invalid or incomplete configuration"""

    exit_code = 1


class DataError(RadOrchestraError):
    """Invalid input data"""

    exit_code = 2


class IoError(DataError):
    """Filesystem failure while reading or writing an artifact"""

    def __init__(self, path: Any, cause: Exception) -> None:
        super().__init__(f"I/O error on {path}: {cause}", path=str(path))
        self.path = path
        self.cause = cause


class DimensionMismatch(DataError):
    def __init__(self, expected: int, actual: int, context: str = "") -> None:
        where = f" ({context})" if context else ""
        super().__init__(
            f"Dimension mismatch{where}: expected {expected}, got {actual}",
            expected=expected,
            actual=actual,
            context=context,
        )
        self.expected = expected
        self.actual = actual


class ZeroVector(DataError):
    def __init__(self, context: str = "") -> None:
        super().__init__(f"Zero-norm vector {context}".strip(), context=context)


class NonFiniteVector(DataError):
    def __init__(self, context: str = "") -> None:
        super().__init__(f"Vector contains NaN or Inf {context}".strip(), context=context)


class EmptyCorpus(DataError):
    def __init__(self, message: str = "Corpus is empty") -> None:
        super().__init__(message)


class DuplicateId(DataError):
    def __init__(self, identifier: str, context: str = "") -> None:
        super().__init__(f"Duplicate id {identifier!r} {context}".strip(), id=identifier)
        self.identifier = identifier


class CorruptIndex(DataError):
    def __init__(self, path: Any, reason: str) -> None:
        super().__init__(f"Corrupt index {path}: {reason}", path=str(path), reason=reason)


class SchemaViolation(DataError):
    def __init__(self, line: int, reason: str, path: Optional[Any] = None) -> None:
        where = f"{path}:{line}" if path else f"line {line}"
        super().__init__(f"Schema violation at {where}: {reason}", line=line, reason=reason)
        self.line = line


class EmptyInput(DataError):
    def __init__(self, what: str = "input") -> None:
        super().__init__(f"Empty {what}", what=what)


class MissingReference(DataError):
    def __init__(self, study_id: str) -> None:
        super().__init__(f"No reference report for study {study_id!r}", study_id=study_id)
        self.study_id = study_id


class ImageUnavailable(DataError):
    def __init__(self, image_ref: str, reason: str) -> None:
        super().__init__(f"Cannot resolve image {image_ref!r}: {reason}", image_ref=image_ref)


class InvalidImage(DataError):
    def __init__(self, reason: str) -> None:
        super().__init__(f"Invalid image payload: {reason}", reason=reason)


class BackendError(RadOrchestraError):
    """Failure talking to a model backend; carries the attempt count"""

    exit_code = 3

    def __init__(self, message: str, attempts: int = 1, backend_id: str = "", **fields: Any) -> None:
        super().__init__(message, attempts=attempts, backend_id=backend_id, **fields)
        self.attempts = attempts
        self.backend_id = backend_id


class BackendTimeout(BackendError):
    retryable = True


class RateLimited(BackendError):
    retryable = True


class BackendHTTPError(BackendError):
    """Non-2xx response; retryable for 5xx only"""

    def __init__(self, status_code: int, message: str, attempts: int = 1, backend_id: str = "") -> None:
        super().__init__(message, attempts=attempts, backend_id=backend_id, status_code=status_code)
        self.status_code = status_code

    @property
    def retryable(self) -> bool:
        return self.status_code >= 500


class AuthFailure(BackendError):
    retryable = False


class MalformedResponse(BackendError):
    retryable = False


class EmptyCompletion(BackendError):
    retryable = False


class PipelineError(RadOrchestraError):
    exit_code = 3


class StageFailed(PipelineError):
    """A pipeline stage failed; dependents of that study are not run"""

    def __init__(self, stage: str, cause: Exception) -> None:
        super().__init__(
            f"Stage {stage} failed: {type(cause).__name__}: {cause}",
            stage=stage,
            cause=type(cause).__name__,
        )
        self.stage = stage
        self.cause = cause
        if isinstance(cause, RadOrchestraError):
            self.exit_code = cause.exit_code


class JudgeError(RadOrchestraError):
    exit_code = 2


class MissingAxis(JudgeError):
    def __init__(self, name: str) -> None:
        super().__init__(f"Judge response is missing axis {name!r}", axis=name)
        self.name = name


class OutOfRange(JudgeError):
    def __init__(self, name: str, value: Any) -> None:
        super().__init__(f"Judge score for {name!r} out of range: {value}", axis=name, value=value)
        self.name = name
        self.value = value


class Unparseable(JudgeError):
    def __init__(self, reason: str) -> None:
        super().__init__(f"Unparseable judge response: {reason}", reason=reason)


class NoJudgements(JudgeError):
    def __init__(self, model: str) -> None:
        super().__init__(f"No judge response could be parsed for model {model!r}", model=model)
