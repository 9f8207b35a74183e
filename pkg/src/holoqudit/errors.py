"""Exception hierarchy shared by all modules.

Input problems (bad labels, malformed states, bad scenario files) derive from
:class:`InputError`; numerical or verification failures derive from
:class:`CheckFailure`. The CLI maps the former to exit code 2 and the latter
to exit code 1.
"""


class HoloError(Exception):
    """Base class for every error raised by this package."""


class InputError(HoloError, ValueError):
    pass


class CheckFailure(HoloError, RuntimeError):
    pass


class DuplicateLabel(InputError):
    pass


class IntraSetEdge(InputError):
    pass


class InvalidLabel(InputError):
    pass


class DimensionOverflow(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class NonPositiveArea(InputError):
    pass


class RatioNotConstant(InputError):
    pass


class NonOrthogonalStates(InputError):
    pass


class SupportOutsideSpan(InputError):
    pass


class NonBipartiteCoupling(InputError):
    pass


class OverlappingTransfers(InputError):
    pass


class UnsupportedBlockCount(InputError):
    pass


class InvalidCutoff(InputError):
    pass


class DetuningTooSmall(InputError):
    pass


class ParseError(InputError):
    pass


class NoConvergence(CheckFailure):
    pass


class CalibrationFailed(CheckFailure):
    pass
