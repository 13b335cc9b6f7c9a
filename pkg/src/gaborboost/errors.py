"""Exception types shared across the package.

Everything raised deliberately by library code derives from GaborboostError,
so the CLI can catch one base class and format a single-line message.
"""


class GaborboostError(Exception):
    """Base class for errors raised by this package."""


class ParseError(GaborboostError):
    """A file could not be parsed; message names the file and location."""


class SchemaError(GaborboostError):
    """A table or model file has the wrong column/field layout."""


class ConfigError(GaborboostError):
    """An invalid option, grid, or label mapping was supplied."""


class SizeError(GaborboostError):
    """An image/kernel size combination is outside supported bounds."""


class ModelFormatError(GaborboostError):
    """A serialized model could not be loaded."""


class FitError(GaborboostError):
    """A nonlinear profile fit failed to produce a usable result."""
