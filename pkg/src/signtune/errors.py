"""Exception hierarchy shared across the toolkit.

The CLI maps these onto process exit codes: usage errors exit 2 (handled
by click), ConfigError 3, DataError 4, NumericError 5.
"""


class SignTuneError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SignTuneError):
    """Invalid or incomplete configuration (pools, taxonomy, run config)."""


class DataError(SignTuneError):
    """Bad or missing data (empty splits, unreadable images, ...)."""


class NumericError(SignTuneError):
    """Numeric contract violation (non-finite values, range errors, ...)."""


class AlignmentError(NumericError):
    """Two parameter sets do not share names/shapes."""


class DegenerateInputError(NumericError):
    """Zero-norm vector where a direction is required."""


class NormalizationError(NumericError):
    """Rows expected to be unit-norm are not."""


class CoverageError(DataError):
    """A prompt set or manifest does not cover every class."""


class MappingError(DataError):
    """A raw dataset label has no entry in the mapping config."""


class DuplicateRecordError(DataError):
    """The same image reference appears more than once in a manifest."""


class ComparabilityError(DataError):
    """Two region reports cannot be compared (different test regions)."""


class IntegrityError(SignTuneError):
    """Checkpoint bytes do not match their recorded digest."""


class FormatVersionError(SignTuneError):
    """Checkpoint written by an unknown format version."""
