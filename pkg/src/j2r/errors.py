"""Exception hierarchy shared by every j2r module."""

from __future__ import annotations


class J2RError(Exception):
    """Base class for all domain errors; the CLI maps these to exit code 1."""


class ExperimentSyntaxError(J2RError):
    """The experiment file is not valid JSON."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class StructureError(J2RError):
    """The JSON is valid but does not describe a well-formed parameter tree."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class ValidationError(J2RError):
    def __init__(self, report):
        lines = "; ".join(str(v) for v in report.violations)
        super().__init__(f"experiment file failed validation: {lines}")
        self.report = report


class ExpansionError(J2RError):
    """Raised while turning a tree into configurations (leaf I/O, empty leaves, name clashes)."""


class ExpressionError(J2RError):
    """Parse or evaluation failure of an expression post-processor formula."""


class UnboundOperandError(ExpressionError):
    pass


class OperandTypeError(ExpressionError):
    pass


class EvaluationError(ExpressionError):
    pass


class PostProcessorError(J2RError):
    pass


class RenderError(J2RError):
    """A configuration cannot be rendered (it still holds an unsampled interval)."""


class StoreError(J2RError):
    pass


class NotFoundError(StoreError):
    pass


class ConflictError(StoreError):
    pass


class RunnerError(J2RError):
    pass


class RaceError(J2RError):
    pass


class InsufficientDataError(J2RError):
    pass
