"""Exception hierarchy shared across the package."""


class GeoSfeError(Exception):
    """Base class for all package errors."""


class MalformedInput(GeoSfeError):
    pass


class InputTooLarge(GeoSfeError):
    pass


class StatsMismatch(GeoSfeError):
    pass


class InsufficientCorpus(GeoSfeError):
    pass


class DimensionMismatch(GeoSfeError):
    pass


class BadAlpha(GeoSfeError):
    pass


class MappingIncomplete(GeoSfeError):
    pass


class ProviderError(GeoSfeError):
    """The external similarity provider failed and fallback is disabled."""


class EmptyCorpus(GeoSfeError):
    pass


class EmptyQuerySet(GeoSfeError):
    pass
