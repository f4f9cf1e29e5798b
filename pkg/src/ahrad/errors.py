"""Exception types raised by the workbench."""


class AhradError(Exception):
    """Base class for every error raised by :mod:`ahrad`."""


class NonPositiveWarp(AhradError):
    pass


class BadNormalization(AhradError):
    pass


class QuadratureUnresolved(AhradError):
    pass


class RootBracketingFailed(AhradError):
    pass


class SupportTouchesCorner(AhradError):
    pass


class NonFiniteField(AhradError):
    pass


class ParityViolation(AhradError):
    pass


class OutsideTriangle(AhradError):
    pass


class WindowExceedsTriangle(AhradError):
    pass


class NotInRange(AhradError):
    pass


class TailNotDecayed(AhradError):
    pass


class DifferencingUnresolved(AhradError):
    pass


class ProbeDeficient(AhradError):
    pass


class FitIllConditioned(AhradError):
    pass


class FitResidualHigh(AhradError):
    pass


class WindowTooShort(AhradError):
    pass


class InconsistentProbes(AhradError):
    pass


class ConfigInvalid(AhradError):
    """Configuration problem; ``path`` names the offending field."""

    def __init__(self, path, message=""):
        self.path = path
        super().__init__(f"{path}: {message}" if message else str(path))
