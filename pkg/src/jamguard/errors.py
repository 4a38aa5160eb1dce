"""Exception types shared across the package.

The CLI maps these onto its stable exit codes: usage errors exit 1, data
errors exit 2, anything else exits 3.
"""


class UsageError(Exception):
    """Bad invocation: unknown config key, invalid flag combination, etc."""


class DataError(Exception):
    """Malformed or missing input data (CSV rows, manifests, model files)."""


class ModelFormatError(DataError):
    """Corrupt or unsupported model/bool-image file.

    Carries the byte offset at which parsing failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
