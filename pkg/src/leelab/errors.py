"""Exception hierarchy. Every error carries a machine-readable ``category``."""


class LeeLabError(Exception):
    category = "error"


class ConfigurationError(LeeLabError, ValueError):
    category = "configuration"


class DomainError(LeeLabError, ValueError):
    """An argument lies outside the region where a formula converges."""

    category = "domain"


class CapacityError(LeeLabError, RuntimeError):
    category = "capacity"


class NumericalError(LeeLabError, RuntimeError):
    category = "numerical"


class SearchFloorError(NumericalError):
    category = "search_floor"


class UnsupportedError(LeeLabError, NotImplementedError):
    category = "unsupported"
