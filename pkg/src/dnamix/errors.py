"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or inconsistent input data (bad CSV row, missing frequency,
    duplicate peak, profile referencing an unknown marker, ...).

    ``line`` is the 1-based line number in the offending file when the error
    came from a parser, else None.
    """

    def __init__(self, message: str, line: "int | None" = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ZeroEvidenceError(RuntimeError):
    """The entered evidence has probability zero under the model, i.e. the
    profiles conflict with the observed peaks. ``marker`` names a diagnosed
    locus when one marker alone explains the conflict.
    """

    def __init__(self, message: str, marker: "str | None" = None):
        self.marker = marker
        super().__init__(message)
