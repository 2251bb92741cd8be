"""Exception types shared across the package."""


class LevyRankError(Exception):
    pass


class InvalidArgument(LevyRankError, ValueError):
    """Raised when an argument violates a documented precondition."""


class UnsupportedLaw(LevyRankError, ValueError):
    pass


class ConfigError(LevyRankError, ValueError):
    """Config parse or schema failure; ``field`` holds the dotted path."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        prefix = ""
        if field:
            prefix = f"{field}: "
        elif line is not None:
            prefix = f"line {line}: "
        super().__init__(prefix + message)
