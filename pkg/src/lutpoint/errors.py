"""Exception types shared by the file readers and the model/table wiring."""


class FormatError(ValueError):
    """Base class for malformed artifact files."""


class BadMagicError(FormatError):
    pass


class VersionError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class LengthMismatchError(FormatError):
    """Payload length disagrees with what the header declares."""


class IncompatibleArtifactError(ValueError):
    """Two artifacts (table, head, dataset) disagree on m or C."""


class OFFParseError(ValueError):
    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NonFiniteError(FloatingPointError):
    """Raised when training or baking produces NaN/inf."""


class DegenerateCloudWarning(UserWarning):
    pass
