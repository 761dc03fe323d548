"""Exception types. Each maps onto a distinct CLI exit code."""


class PhaseSubError(Exception):
    exit_code = 1


class UnknownPresetError(PhaseSubError, KeyError):
    exit_code = 3

    def __str__(self):
        return self.args[0] if self.args else ""


class DatasetFormatError(PhaseSubError, ValueError):
    exit_code = 4


class DimensionMismatchError(PhaseSubError, ValueError):
    exit_code = 5


class PreconditionError(PhaseSubError, ValueError):
    exit_code = 6


class EmptyApertureError(PreconditionError):
    """Raised when no element lies inside a pixel's receive aperture."""
