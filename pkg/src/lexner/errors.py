"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class LexnerError(Exception):
    exit_code = 2


class ConfigError(LexnerError):
    exit_code = 1


class CorpusError(LexnerError):
    """Malformed corpus, lexicon, embedding or checkpoint input."""

    exit_code = 2

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericError(LexnerError):
    exit_code = 3
