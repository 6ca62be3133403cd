"""Exception hierarchy.

``ConfigError`` and ``DataError`` map to the CLI exit codes 2 and 3.
"""


class TopoCFError(Exception):
    pass


class ConfigError(TopoCFError):
    pass


class DataError(TopoCFError):
    pass


class ZeroRecords(DataError):
    pass


class ZeroDegreeNode(DataError):
    pass


class MissingTimestamps(DataError):
    pass


class EmptyAfterFiltering(DataError):
    pass


class EmptySample(DataError):
    pass


class EmptyView(DataError):
    pass


class EmptyProjection(DataError):
    pass


class RetryExhausted(DataError):
    pass


class TooFewSamples(DataError):
    pass


class RankDeficient(DataError):
    def __init__(self, message, dropped=()):
        super().__init__(message)
        self.dropped = tuple(dropped)


class ZeroVariance(DataError):
    pass


class NonPositiveValue(DataError):
    pass


class NonFinite(DataError):
    pass


class NonFiniteGradient(TopoCFError):
    pass


class DivergedTraining(TopoCFError):
    pass


class UnsupportedForKind(ConfigError):
    pass
