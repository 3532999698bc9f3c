"""Exception hierarchy shared by all wspnet modules.

The CLI maps these onto exit codes: configuration-like errors exit with
code 2, numeric/stability errors with code 3.
"""


class WspnetError(Exception):
    """Base class for all errors raised by wspnet."""


class ConfigurationError(WspnetError):
    """Invalid configuration value (bad axis, odd model width, p < 1, ...)."""


class DimensionError(ConfigurationError):
    """Shape or axis mismatch between operands."""


class ContractError(WspnetError):
    """A call-contract violation (non-scalar loss, missing tap feature, ...)."""


class DegenerateRangeError(WspnetError):
    """A data channel has no spread, so min-max normalization is undefined."""


class NumericError(WspnetError):
    """Non-finite values encountered during computation."""


class StabilityError(NumericError):
    """A time integration diverged; usually fixed by a smaller step size."""
