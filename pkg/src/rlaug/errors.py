"""Exception types. The CLI maps ContractViolation to exit code 1 and
ParseError / ConfigError / OSError to exit code 2."""


class ContractViolation(ValueError):
    """A caller broke an operation's precondition (shapes, ranges, ordering)."""


class DegenerateCropError(ContractViolation):
    """Crop step leaves no pixels along the cropped axis."""


class ConfigError(Exception):
    """Bad or missing configuration: unknown keys, absent checkpoints."""


class ParseError(Exception):
    """Malformed file contents. Carries the file path and byte offset."""

    def __init__(self, path, offset, message):
        self.path = str(path)
        self.offset = offset
        super().__init__(f"{self.path}: byte {offset}: {message}")
