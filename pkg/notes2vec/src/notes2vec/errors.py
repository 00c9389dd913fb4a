class Notes2VecError(Exception):
    """Base class for package failures."""


class InputError(Notes2VecError):
    """Malformed input files or arguments."""


class SingleClass(Notes2VecError):
    """Training data contains only one label."""
