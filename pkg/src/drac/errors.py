"""Exception hierarchy shared across the package."""


class DracError(Exception):
    """Base class for every error raised by this package."""


class LoadError(DracError):
    """A fixture, spec, script, or store file could not be loaded."""
