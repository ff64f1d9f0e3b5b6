def _restore(cls, args, state):
    error = Exception.__new__(cls)
    error.args = args
    error.__dict__.update(state)
    return error


class MuscleWorkError(Exception):
    """Base class for every error raised by the engine."""

    # Subclasses take structured constructor arguments; rebuild from state so errors cross
    # process boundaries intact.
    def __reduce__(self):
        return _restore, (type(self), self.args, self.__dict__)


class InputError(MuscleWorkError, ValueError):
    """Bad input data: malformed files, invalid parameters, unmet preconditions."""


class NumericError(MuscleWorkError):
    """A numerical step could not produce a valid result."""


class MalformedRecord(InputError):
    def __init__(self, line: int, reason: str):
        self.line = line
        super().__init__(f"line {line}: malformed record ({reason})")


class NonMonotonicTimestamp(InputError):
    def __init__(self, line: int, t_ms: int, previous: int):
        self.line = line
        super().__init__(
            f"line {line}: timestamp {t_ms} ms is not after previous timestamp {previous} ms"
        )


class MissingJoint(InputError):
    def __init__(self, name: str, line: int):
        self.name = name
        self.line = line
        super().__init__(f"line {line}: missing joint {name}")


class TooFewFrames(InputError):
    def __init__(self, needed: int, got: int):
        super().__init__(f"need at least {needed} frames, got {got}")


class WindowTooLarge(InputError):
    def __init__(self, window: int, frames: int):
        super().__init__(f"window of {window} frames exceeds stream length {frames}")


class SchemaError(InputError):
    pass


class UncoveredGroup(InputError):
    def __init__(self, group: str, side: str):
        self.group = group
        self.side = side
        super().__init__(f"no muscle covers group {group} on side {side}")


class DuplicateMuscle(InputError):
    def __init__(self, name: str):
        super().__init__(f"duplicate muscle name {name!r}")


class MissingSegment(InputError):
    def __init__(self, segment: str):
        super().__init__(f"pose has no segment {segment!r}")


class DofNotSpanned(InputError):
    def __init__(self, muscle: str, dof: str):
        super().__init__(f"muscle {muscle!r} does not span {dof}")


class AngleOutOfRange(InputError):
    def __init__(self, dof: str, value: float):
        super().__init__(f"{dof} = {value:.6g} rad is outside its joint range")


class GenderRequired(InputError):
    def __init__(self):
        super().__init__(
            "heart-rate calorie regression needs gender male or female; use the MET estimate"
        )


class NegativeDuration(InputError):
    def __init__(self, minutes: float):
        super().__init__(f"duration must be non-negative, got {minutes} min")


class LengthMismatch(InputError):
    def __init__(self, left: int, right: int):
        super().__init__(f"participant lists differ in length ({left} vs {right})")


class DegenerateRange(InputError):
    pass


class UnbalancedDesign(InputError):
    pass


class MissingExercise(InputError):
    def __init__(self, exercise: str):
        super().__init__(f"results contain no {exercise} trials")


class DegeneratePose(NumericError):
    def __init__(self, parent: str, child: str):
        super().__init__(f"joints {parent} and {child} coincide")


class SolverDiverged(NumericError):
    def __init__(self, t_ms: int, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"t={t_ms} ms: no convergence after {iterations} iterations "
            f"(residual {residual:.3g} N·m)"
        )


class TrialError(MuscleWorkError):
    """A protocol trial failed; carries its coordinates."""

    def __init__(self, subject: int, exercise: str, measurement: int, cause: Exception):
        self.subject = subject
        self.exercise = exercise
        self.measurement = measurement
        self.cause = cause
        super().__init__(
            f"trial subject={subject} exercise={exercise} measurement={measurement}: {cause}"
        )
