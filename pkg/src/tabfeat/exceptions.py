"""Exception hierarchy shared by every module."""


class TabfeatError(Exception):
    """Base class for all errors raised by tabfeat."""


class ParseError(TabfeatError, ValueError):
    """Malformed input text (CSV rows, expressions, spec files)."""

    def __init__(self, message, line=None, offset=None):
        self.line = line
        self.offset = offset
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ConfigError(TabfeatError, ValueError):
    """Invalid configuration or inconsistent arguments."""


class SchemaError(TabfeatError, KeyError):
    """A dataset does not provide the columns an operation needs."""

    def __init__(self, message, missing=()):
        self.missing = tuple(missing)
        super().__init__(message)

    def __str__(self):
        return self.args[0]


class EvaluationError(TabfeatError, RuntimeError):
    """A feature set could not be scored (e.g. the subset is too small)."""
