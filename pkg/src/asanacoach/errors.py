"""Exception types raised by the engine. All inherit from EngineError."""


class EngineError(Exception):
    """Base class for all engine errors."""

    code = "EngineError"

    def __init__(self, detail: str = ""):
        super().__init__(detail)
        self.detail = detail


# -- ingest ----------------------------------------------------------------

class MalformedRecord(EngineError):
    """Wire record is not parseable (bad syntax, missing/mistyped fields)."""

    code = "MalformedRecord"


class SchemaViolation(EngineError):
    """Record parsed but violates the frame schema (count, ranges)."""

    code = "SchemaViolation"


class DegenerateTorso(EngineError):
    """Hip and shoulder midpoints coincide; no torso scale available."""

    code = "DegenerateTorso"


class LowConfidenceAnchors(EngineError):
    """Hips or shoulders below the confidence floor; frame cannot be normalized."""

    code = "LowConfidenceAnchors"


# -- biomech ---------------------------------------------------------------

class ZeroLengthSegment(EngineError):
    """A body segment has (near) zero length; the angle is undefined."""

    code = "ZeroLengthSegment"


# -- model -----------------------------------------------------------------

class DimensionMismatch(EngineError):
    """Input shapes do not match the model parameters."""

    code = "DimensionMismatch"


class EmptyClass(EngineError):
    """A class is absent from the training split."""

    code = "EmptyClass"


# -- evaluator -------------------------------------------------------------

class LengthMismatch(EngineError):
    """Feature vector length does not match the reference pose."""

    code = "LengthMismatch"


class NoEvaluableJoints(EngineError):
    """Every joint is masked; no posture score can be computed."""

    code = "NoEvaluableJoints"


# -- feedback --------------------------------------------------------------

class UnknownJoint(EngineError):
    """Joint name is not in the template table."""

    code = "UnknownJoint"


# -- edge_opt --------------------------------------------------------------

class NonFiniteWeights(EngineError):
    """Model contains NaN or infinite weights."""

    code = "NonFiniteWeights"


class InvalidFraction(EngineError):
    """Pruning fraction outside [0, 1]."""

    code = "InvalidFraction"


class InsufficientFrames(EngineError):
    """Too few frames for a meaningful benchmark."""

    code = "InsufficientFrames"


# -- synth -----------------------------------------------------------------

class InvalidSpec(EngineError):
    """Skeleton spec violates its invariants."""

    code = "InvalidSpec"


# -- service ---------------------------------------------------------------

class UnknownPose(EngineError):
    """Requested pose id is not in the reference library."""

    code = "UnknownPose"


class CapacityExceeded(EngineError):
    """Maximum number of concurrent sessions reached."""

    code = "CapacityExceeded"


class UnknownSession(EngineError):
    """Session id does not exist (never started or already ended)."""

    code = "UnknownSession"
