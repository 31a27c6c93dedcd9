"""Exception taxonomy shared across the engine."""


class EngineError(Exception):
    """Base class for all engine errors."""


# --- scene IO ---

class MissingFile(EngineError):
    pass


class CalibrationInvalid(EngineError):
    pass


class FrameCountMismatch(EngineError):
    pass


class OutOfRange(EngineError):
    pass


class DecodeError(EngineError):
    pass


class InvalidSpec(EngineError):
    pass


# --- geometry ---

class BehindCamera(EngineError):
    pass


class NonPositiveDepth(EngineError):
    pass


class DegenerateBaseline(EngineError):
    pass


# --- shared shape checks ---

class DimensionMismatch(EngineError):
    pass


class ShapeMismatch(EngineError):
    pass


# --- compositor ---

class UnsupportedOp(EngineError):
    pass


class EmptyDataset(EngineError):
    pass


class MissingStage(EngineError):
    pass


class CheckpointVersionMismatch(EngineError):
    pass


# --- editing ---

class EmptyLift(EngineError):
    pass


class TrackLost(EngineError):
    pass


# --- metrics ---

class EmptyCandidateSet(EngineError):
    pass
