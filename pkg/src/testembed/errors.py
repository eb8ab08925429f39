"""Exception types raised across the package."""


class TestEmbedError(Exception):
    """Base class for every error raised by testembed."""

    __test__ = False  # keep pytest from collecting this as a test class


class ShapeError(TestEmbedError, ValueError):
    pass


class ParameterError(TestEmbedError, ValueError):
    pass


class DegenerateInputError(TestEmbedError, ValueError):
    pass


class UsageError(TestEmbedError, RuntimeError):
    pass


class SamplingError(TestEmbedError, ValueError):
    pass


class ParseError(TestEmbedError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class VocabLookupError(TestEmbedError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "lookup error"


class RankError(TestEmbedError, ValueError):
    pass


class ConfigError(TestEmbedError, ValueError):
    pass


class DegenerateTaskError(TestEmbedError, ValueError):
    pass


class EvalError(TestEmbedError, ValueError):
    pass


class FormatError(TestEmbedError, ValueError):
    pass
