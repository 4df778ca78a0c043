"""Error taxonomy shared across the package.

Every domain failure derives from :class:`WheelArmError`; the CLI prints the
class name and exits 1, so the names are part of the interface.
"""


class WheelArmError(Exception):
    """Base class for all domain errors."""

    @property
    def taxonomy(self) -> str:
        return type(self).__name__


# --- kinematics -------------------------------------------------------------

class NonOrthogonalInput(WheelArmError):
    """Rotation matrix violates orthogonality beyond tolerance."""


class DimensionMismatch(WheelArmError):
    """Vector or matrix size does not match the chain / expected shape."""


class MaxIterationsExceeded(WheelArmError):
    """IK failed to converge; carries the final residual."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class JointLimitViolation(WheelArmError):
    """IK converged but the wrapped solution exceeds joint limits."""

    def __init__(self, message: str, joints=None):
        super().__init__(message)
        self.joints = joints  # offending joint indices


# --- scene / files ----------------------------------------------------------

class SchemaError(WheelArmError):
    """Config file failed validation; carries the offending key path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class OutOfReach(WheelArmError):
    """End effector too far from the articulation handle."""


# --- session ----------------------------------------------------------------

class MalformedCommand(WheelArmError):
    """Teleop command failed schema validation."""


class IkRejected(WheelArmError):
    """An end-effector increment had no IK solution; state unchanged."""


class SessionAlreadyActive(WheelArmError):
    pass


class NoActiveSession(WheelArmError):
    pass


class NotOperator(WheelArmError):
    """A mutating message arrived from a connection holding the observer role."""


class ScriptError(WheelArmError):
    """Replay script invalid; carries a line or command reference."""

    def __init__(self, message: str, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


# --- recorder / alignment ---------------------------------------------------

class OutOfRange(WheelArmError):
    """Interpolation requested outside the source time span."""

    def __init__(self, message: str, times=None):
        super().__init__(message)
        self.times = times


class EmptyTopic(WheelArmError):
    def __init__(self, topic: str):
        super().__init__(f"topic '{topic}' has no samples")
        self.topic = topic


class NoOverlap(WheelArmError):
    """Topic time spans share no common window."""


class CorruptContainer(WheelArmError):
    """Checksum or structure mismatch; carries file and byte offset."""

    def __init__(self, file: str, offset: int, message: str = "checksum mismatch"):
        super().__init__(f"{file} @ byte {offset}: {message}")
        self.file = file
        self.offset = offset


# --- model ------------------------------------------------------------------

class SchemaMismatch(WheelArmError):
    """Dataset container does not match the expected topic schema."""


class ShapeMismatch(WheelArmError):
    """Tensor shapes inconsistent with the model configuration."""


class InsufficientData(WheelArmError):
    """Not enough trajectories to form a train/validation split."""
