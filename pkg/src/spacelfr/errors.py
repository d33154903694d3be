"""Exception types shared across the package."""


class SpacelfrError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(SpacelfrError):
    pass


class DuplicateLabelError(SpacelfrError):
    pass


class UnknownLabelError(SpacelfrError):
    pass


class AlgebraicLoopError(SpacelfrError):
    pass


class SingularResolventError(SpacelfrError):
    pass


class UnstableModelError(SpacelfrError):
    pass


class SingularFeedthroughError(SpacelfrError):
    pass


class OutOfRangeError(SpacelfrError):
    pass


class MissingBlockError(SpacelfrError):
    pass


class UnknownBlockError(SpacelfrError):
    pass


class UnknownPortError(SpacelfrError):
    pass


class TooManyInvertedPortsError(SpacelfrError):
    pass


class NonPsdResidualError(SpacelfrError):
    pass


class NonPdInertiaError(SpacelfrError):
    pass


class ParseError(SpacelfrError):
    pass


class ValidationError(SpacelfrError):
    """Config validation failure; carries the offending field path."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class NonMonotonicTimesError(SpacelfrError):
    pass


class LoopClosureViolationError(SpacelfrError):
    pass


class InvalidModeError(SpacelfrError):
    pass


class MissingChannelsError(SpacelfrError):
    pass


class InitialGainsUnstableError(SpacelfrError):
    pass


class NominalUnstableError(SpacelfrError):
    """A grid model is nominally unstable; carries the grid index."""

    def __init__(self, index, message=""):
        super().__init__(f"grid model {index} is nominally unstable {message}".rstrip())
        self.index = index


class UnknownChannelError(SpacelfrError):
    pass
