class ContractError(ValueError):
    """An operation was called with arguments outside its contract."""


class InsufficientSamplesError(ContractError):
    """Not enough samples to compute a statistic."""


class ConfigurationError(ValueError):
    """A layout or experiment configuration is invalid or unsatisfiable."""


class NoSteppingstoneError(LookupError):
    """The coverage store holds no policy to retrieve."""


class UndefinedTestError(ValueError):
    """A statistical test is undefined for the given samples."""


class PartialSetError(ConfigurationError):
    """The offline budget ran out before the coverage set's edge policies were trained."""
