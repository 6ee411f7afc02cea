"""Exception types shared across the toolkit.

Exit-code mapping for the CLI: usage errors are 1, ParseError is 2,
InvariantViolation is 3.
"""


class SotifKitError(Exception):
    """Base class for all toolkit errors."""


class ParseError(SotifKitError):
    """An input file violated its format contract.

    Carries enough location detail (source file plus line or record index)
    that the offending input can be found without re-running anything.
    """

    def __init__(self, message: str, *, source: str | None = None, line: int | None = None):
        self.source = source
        self.line = line
        self.reason = message
        prefix = ""
        if source is not None:
            prefix = source if line is None else f"{source}:{line}"
        super().__init__(f"{prefix}: {message}" if prefix else message)


class InvariantViolation(SotifKitError):
    """A domain invariant or call contract was violated."""
