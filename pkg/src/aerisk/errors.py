"""Exception taxonomy shared across the package.

Two families matter to the command line front end: input problems
(malformed files, bad configuration, schema mismatches) and numeric or
degenerate-data problems (empty arms, undefined ratios, unstable fits).
The CLI maps them to exit codes 1 and 2 respectively.
"""


class AeriskError(Exception):
    """Base class for all package errors."""


class InputError(AeriskError):
    """User-supplied input is invalid (CLI exit code 1)."""


class CsvFormatError(InputError):
    """Patient CSV violates the expected schema; message names the row."""


class SchemaError(InputError):
    """Aggregate JSON document violates the versioned schema."""


class ConfigError(InputError):
    """Simulation configuration is invalid."""


class EstimationError(AeriskError):
    """Estimation is impossible on the given data (CLI exit code 2)."""


class EmptyArmError(EstimationError):
    """An operation requires a non-empty treatment arm."""


class ZeroRiskTimeError(EstimationError):
    """Total restricted at-risk time is zero; rates are undefined."""


class RatioUndefinedError(EstimationError):
    """The gold-standard estimate is zero; ratios are undefined."""


class DegenerateBootstrapError(EstimationError):
    """Too few valid bootstrap replicates to form a standard error."""


class MetaFitError(EstimationError):
    """Meta-analytic fit is impossible (too few records, bad SEs, rank)."""
