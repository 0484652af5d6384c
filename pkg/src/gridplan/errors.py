"""Exception hierarchy.

Every error raised on purpose by the package derives from GridPlanError.
FormatError covers malformed documents (syntax, shape, unknown keys); the
InvalidInputError family covers well-formed documents that break a domain
invariant. The CLI maps the former to exit code 2 and the latter to 1 or 2
depending on the command.
"""
from __future__ import annotations


class GridPlanError(Exception):
    pass


class FormatError(GridPlanError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class InvalidInputError(GridPlanError):
    """A document parsed but violates an invariant; carries the finding code."""

    code = "INVALID"

    def __init__(self, message: str, subject: str = "", findings=(), code: str | None = None):
        super().__init__(message)
        self.subject = subject
        self.findings = tuple(findings)
        if code is not None:
            self.code = code


class DuplicateIdError(InvalidInputError):
    code = "DUPLICATE_ID"


class DanglingReferenceError(InvalidInputError):
    code = "DANGLING_REFERENCE"


class ConstraintViolationError(InvalidInputError):
    code = "CONSTRAINT_VIOLATION"


class CollocationContradictionError(InvalidInputError):
    code = "COLLOCATION_CONTRADICTION"


class TopologyError(InvalidInputError):
    code = "MISSING_UPLINK"


class UnknownNodeError(GridPlanError, LookupError):
    def __init__(self, node_id: str):
        super().__init__(f"unknown node {node_id!r}")
        self.node_id = node_id


class UnknownGroupError(GridPlanError, LookupError):
    def __init__(self, group_id: str):
        super().__init__(f"unknown group {group_id!r}")
        self.group_id = group_id


class UnsupportedLocatorError(GridPlanError):
    pass


class CatalogFetchError(GridPlanError, OSError):
    pass


class InvalidProblemError(GridPlanError):
    pass


class InfeasibleError(GridPlanError):
    def __init__(self, message: str, group_id: str | None = None):
        super().__init__(message)
        self.group_id = group_id


class SearchSpaceExceededError(GridPlanError):
    pass


class InvalidPlanError(GridPlanError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class DigestMismatchError(GridPlanError):
    pass


class MiddlewareError(GridPlanError):
    pass


class InsufficientMemoryError(MiddlewareError):
    pass


class SubmissionFailure(MiddlewareError):
    pass


class IllegalTransitionError(GridPlanError):
    pass


class NameAlreadyBoundError(GridPlanError):
    pass


class UnknownNameError(GridPlanError, LookupError):
    pass
