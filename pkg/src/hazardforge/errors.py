"""Exception types shared across the package."""


class HazardForgeError(Exception):
    """Base class for package-specific failures."""


class InputError(HazardForgeError):
    """Malformed or inconsistent user input (files, schemas, arguments)."""


class MissingFile(InputError):
    """A required input file does not exist.

    ``kind`` distinguishes which input is absent (e.g. "SchemaMissing") so
    the CLI can emit a machine-readable error.
    """

    def __init__(self, kind, path):
        super().__init__(f"{kind}: {path}")
        self.kind = kind
        self.path = path


class EmptyStream(InputError):
    """An observation stream contained no entries."""


class SchemaMismatch(InputError):
    """Data does not line up with the dataset schema."""


class DegenerateData(HazardForgeError):
    """Training data carries no events or no exposure."""


class TooFewGroups(InputError):
    """Fewer subjects than requested folds."""


class SingleClass(InputError):
    """A classification routine received only one label."""


class OutOfRange(HazardForgeError):
    """A query time lies outside the monitored window."""


class RateBoundViolated(HazardForgeError):
    """The declared hazard bound was exceeded during simulation."""
