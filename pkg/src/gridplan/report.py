from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator


class Severity(str, Enum):
    ERROR = "ERROR"
    WARNING = "WARNING"


@dataclass(frozen=True)
class Finding:
    severity: Severity
    code: str
    subject: str
    message: str

    def line(self) -> str:
        return f"{self.severity.value} {self.code} {self.subject}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    """Ordered findings; empty means valid. Order is by subject, then code."""

    findings: tuple[Finding, ...] = ()

    @classmethod
    def of(cls, findings: Iterable[Finding]) -> "ValidationReport":
        unique = set(findings)
        return cls(tuple(sorted(unique, key=lambda f: (f.subject, f.code, f.message))))

    def __len__(self) -> int:
        return len(self.findings)

    def __iter__(self) -> Iterator[Finding]:
        return iter(self.findings)

    def __bool__(self) -> bool:
        return bool(self.findings)

    @property
    def codes(self) -> list[str]:
        return [f.code for f in self.findings]

    @property
    def has_errors(self) -> bool:
        return any(f.severity is Severity.ERROR for f in self.findings)

    def lines(self) -> list[str]:
        return [f.line() for f in self.findings]

    def __add__(self, other: "ValidationReport") -> "ValidationReport":
        return ValidationReport.of(self.findings + other.findings)


def error(code: str, subject: str, message: str) -> Finding:
    return Finding(Severity.ERROR, code, subject, message)


def warning(code: str, subject: str, message: str) -> Finding:
    return Finding(Severity.WARNING, code, subject, message)
