"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """User-supplied parameters are out of range or mutually inconsistent."""


class CatalogLookupError(KeyError):
    """A table, column, index, or plan-node reference cannot be resolved."""


class ContractError(ValueError):
    """A numeric contract was violated (bad simplex, nonpositive denominator, ...)."""
