"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class DapmavError(Exception):
    exit_code = 1


class ConfigError(DapmavError, ValueError):
    exit_code = 2


class DataError(DapmavError, ValueError):
    exit_code = 3


class StageDependencyError(DapmavError):
    exit_code = 4


class StaleInputError(StageDependencyError):
    pass


class FetchError(DataError):
    pass
