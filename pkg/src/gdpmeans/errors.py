"""Exception hierarchy.

Errors are split into two families so the command line can map them onto
exit codes: :class:`InputError` (bad data, bad arguments, exit 2) and
:class:`NumericalError` (the solver could not proceed, exit 3).
"""


class GDPMeansError(Exception):
    """Base class for every error raised by this package."""

    code = "error"


class InputError(GDPMeansError, ValueError):
    code = "input_error"


class NumericalError(GDPMeansError, ArithmeticError):
    code = "numerical_error"


class DomainError(InputError):
    """A value lies outside the domain of a generator or of ``f``."""

    code = "domain_error"


class DimensionMismatch(InputError):
    code = "dimension_mismatch"


class LengthMismatch(InputError):
    code = "length_mismatch"


class RangeError(InputError):
    """Argument of an inverse lies outside the range of the forward map."""

    code = "range_error"


class EmptyDataset(InputError):
    code = "empty_dataset"


class ZeroVariance(InputError):
    code = "zero_variance"


class BadDimensions(InputError):
    code = "bad_dimensions"


class Unsupported(InputError):
    """No closed-form rule exists for the requested combination."""

    code = "unsupported"


class InfiniteWeight(NumericalError):
    """``f'(0)`` is infinite (power mean with ``a = 0`` and ``beta < 1``)."""

    code = "infinite_weight"


class OverlapStall(NumericalError):
    """A center sits on one of its members and ``f'(0)`` is infinite."""

    code = "overlap_stall"


class EmptyCluster(NumericalError):
    code = "empty_cluster"


class LineSearchFailure(NumericalError):
    code = "line_search_failure"


class SingularG(NumericalError):
    code = "singular_g"
