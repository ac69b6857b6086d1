from __future__ import annotations


class LangDivError(RuntimeError):
    """Base error. ``kind`` and ``exit_code`` drive the CLI's error line."""

    kind = "error"
    exit_code = 2


class UsageError(LangDivError):
    kind = "usage"
    exit_code = 1


class ConfigError(LangDivError):
    kind = "config"
    exit_code = 1


class ArgumentError(LangDivError):
    kind = "argument"


class RecordParseError(LangDivError):
    kind = "parse"

    def __init__(self, message: str, line_number: int | None = None, field: str | None = None):
        self.line_number = line_number
        self.field = field
        prefix = f"line {line_number}: " if line_number is not None else ""
        suffix = f" (field '{field}')" if field else ""
        super().__init__(f"{prefix}{message}{suffix}")


class RecordValidationError(RecordParseError):
    kind = "validation"


class GeohashError(LangDivError):
    kind = "geohash"


class TrainingError(LangDivError):
    kind = "training"


class ModelFormatError(LangDivError):
    kind = "model_format"


class AssignmentError(LangDivError):
    kind = "assignment"


class EmptyCellError(LangDivError):
    kind = "empty_cell"


class UndefinedCorrelationError(LangDivError):
    kind = "undefined_correlation"


class CensusLoadError(LangDivError):
    kind = "census_load"


class DiagnosticError(LangDivError):
    kind = "diagnostic"


class GenerationError(LangDivError):
    kind = "generation"


class MissingStageError(LangDivError):
    kind = "missing_stage"

    def __init__(self, stage: str, path: object):
        self.stage = stage
        super().__init__(f"stage '{stage}' output missing: {path}")
