from dataclasses import dataclass
from typing import List, Optional


class QbError(Exception):
    """Base class for all simulator errors"""


class UsageError(QbError, ValueError):
    """A precondition of an operation was violated by the caller"""


class InvalidParameterError(QbError, ValueError):
    """A model parameter violates its stated constraint"""


@dataclass
class Diagnostic:
    """One problem found in a run configuration"""

    message: str
    field: Optional[str] = None  # dotted path, e.g. "agents.alpha"
    line: Optional[int] = None  # 1-based line in the source file

    def __str__(self) -> str:
        where = []
        if self.line is not None:
            where.append(f"line {self.line}")
        if self.field:
            where.append(self.field)
        prefix = ", ".join(where)
        return f"{prefix}: {self.message}" if prefix else self.message


class ConfigError(QbError):
    """A run configuration could not be read or validated"""

    def __init__(self, source: str, diagnostics: List[Diagnostic]):
        self.source = source
        self.diagnostics = diagnostics
        lines = [f"invalid configuration {source}:"]
        lines.extend(f"  {d}" for d in diagnostics)
        super().__init__("\n".join(lines))
