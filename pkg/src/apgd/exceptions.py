"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A parameter set that violates a precondition of the method."""


class DomainError(ValueError):
    """An argument outside the domain of a function."""


class ParseError(ValueError):
    """A malformed input file. Carries the offending line number."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)
