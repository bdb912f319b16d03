"""Exception taxonomy shared by every engine module.

Loading errors carry enough context to name the offending file or manifest
entry; numerical errors say what to change (usually: use a positive alpha).
"""


class EegAlignError(Exception):
    """Base class for all engine errors."""


class FormatError(EegAlignError):
    """A file does not parse as the format it claims to be (bad magic, header)."""


class UnsupportedFeatureError(EegAlignError):
    """The file is well-formed but uses a feature the engine rejects
    (fortran order, non-float dtype, big-endian, NPY version != 1.0)."""


class TruncationError(EegAlignError):
    """Payload size does not match the shape/dtype declared in the header."""


class ValidationError(EegAlignError):
    """Input data violates a documented invariant (non-finite values, bad ids)."""


class LoadError(EegAlignError):
    """A dataset could not be assembled; the message names the offending entry."""


class ParameterError(EegAlignError):
    """An argument is outside its documented domain."""


class RangeError(ParameterError):
    """A requested time window falls outside the epoch bounds or is empty."""


class NumericalError(EegAlignError):
    """A linear-algebra step failed (e.g. singular system at alpha = 0)."""


class UndefinedStatError(EegAlignError):
    """A statistic is undefined on this input (constant vector, all-tied ranks).

    Callers that aggregate map this to 0 and keep a count; see
    metrics module notes.
    """


class AlignmentError(EegAlignError):
    """Two objects that must share stimulus ids (order-aligned) do not."""


class ConfigurationError(EegAlignError):
    """A required resource (montage, labels) is missing for the requested analysis."""
