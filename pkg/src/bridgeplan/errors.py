"""Exception hierarchy shared across the package."""


class BridgePlanError(Exception):
    """Base class for all package errors."""


class InvalidInputError(BridgePlanError, ValueError):
    pass


class SingularTimeError(BridgePlanError, ValueError):
    """Flow time hit a point where the bridge drift or score is undefined."""


class CorruptModelError(BridgePlanError):
    pass


class DivergedTrainingError(BridgePlanError):
    def __init__(self, message, *, tensor=None, epoch=None, step=None):
        super().__init__(message)
        self.tensor = tensor
        self.epoch = epoch
        self.step = step


class SamplingDivergedError(BridgePlanError):
    def __init__(self, message, *, step=None):
        super().__init__(message)
        self.step = step


class CheckpointFormatError(BridgePlanError):
    pass


class GenerationError(BridgePlanError):
    pass


class DatasetParseError(BridgePlanError, ValueError):
    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer
