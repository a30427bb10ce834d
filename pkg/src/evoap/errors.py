"""Exception hierarchy shared by all evoap modules."""


class EvoApError(Exception):
    """Base class for every error raised by evoap."""


class DataError(EvoApError, ValueError):
    pass


class SchemaError(DataError):
    pass


class DuplicateError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class DegenerateFeatureError(InsufficientDataError):
    """A feature has zero variance where a standard deviation is needed."""

    def __init__(self, message, dimension=None):
        super().__init__(message)
        self.dimension = dimension


class UndefinedMinimumError(DataError):
    pass


class NoExemplarError(EvoApError):
    """No node qualified as an exemplar (preferences are likely too low)."""

    def __init__(self, message, time=None, iteration=None):
        if time is not None or iteration is not None:
            message = f"{message} (t={time}, iteration={iteration})"
        super().__init__(message)
        self.time = time
        self.iteration = iteration


class NoNeighborError(EvoApError):
    pass


class UndefinedMetricError(EvoApError, ValueError):
    pass


class ConfigError(EvoApError, ValueError):
    pass
