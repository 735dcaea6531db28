"""Exception hierarchy shared by every module of the package."""


class MarketError(ValueError):
    """Base class for invalid inputs to the market model."""


class DimensionError(MarketError):
    """Vectors that should describe the same products have different lengths."""


class DomainError(MarketError):
    """A value lies outside the domain of the model (e.g. non-positive appeal)."""


class NoPurchasePossibleError(DomainError):
    """Every product has zero purchase weight, so no purchase can ever happen."""


class SizeError(MarketError):
    """An exact method was asked to handle an instance that is too large."""


class UsageError(MarketError):
    """A routine was called with arguments that violate its preconditions."""


class ConfigError(MarketError):
    """A configuration file could not be parsed or failed schema validation."""
