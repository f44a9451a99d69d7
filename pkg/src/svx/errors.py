"""Exception hierarchy shared across the package."""


class SvxError(Exception):
    """Base class for all package errors."""


class FormatError(SvxError):
    """Malformed container or header in a file being read."""


class UnsupportedCodecError(FormatError):
    """Recognized container but an encoding we do not handle."""


class ShapeError(SvxError):
    """Array dimensions inconsistent with what an operation requires."""


class DomainError(SvxError):
    """Scalar argument outside its mathematical domain."""


class ConfigError(SvxError):
    """Invalid configuration value combination."""


class DataError(SvxError):
    """Dataset-level problem (missing/short/degenerate items)."""


class EmptyInputError(DataError):
    """An operation received no data at all."""


class NumericError(SvxError):
    """Non-finite values or a singular system encountered mid-computation."""
