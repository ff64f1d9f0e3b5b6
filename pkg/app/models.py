from enum import IntEnum

try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        """Backport of enum.StrEnum (Python 3.11+)."""

        __str__ = str.__str__
        __format__ = str.__format__

        @staticmethod
        def _generate_next_value_(name, start, count, last_values):
            return name.lower()
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class JointId(IntEnum):
    """The 21 canonical skeleton joints; codes are stable."""

    PELVIS = 0
    SPINE_NAVEL = 1
    SPINE_CHEST = 2
    NECK = 3
    HEAD = 4
    CLAVICLE_L = 5
    SHOULDER_L = 6
    ELBOW_L = 7
    WRIST_L = 8
    HIP_L = 9
    KNEE_L = 10
    ANKLE_L = 11
    FOOT_L = 12
    CLAVICLE_R = 13
    SHOULDER_R = 14
    ELBOW_R = 15
    WRIST_R = 16
    HIP_R = 17
    KNEE_R = 18
    ANKLE_R = 19
    FOOT_R = 20


class DofId(IntEnum):
    """The 15 actuated degrees of freedom, see docs/dof.md for conventions."""

    SHOULDER_FLEXION_L = 0
    SHOULDER_ABDUCTION_L = 1
    ELBOW_FLEXION_L = 2
    HIP_FLEXION_L = 3
    HIP_ABDUCTION_L = 4
    KNEE_FLEXION_L = 5
    ANKLE_FLEXION_L = 6
    SHOULDER_FLEXION_R = 7
    SHOULDER_ABDUCTION_R = 8
    ELBOW_FLEXION_R = 9
    HIP_FLEXION_R = 10
    HIP_ABDUCTION_R = 11
    KNEE_FLEXION_R = 12
    ANKLE_FLEXION_R = 13
    TRUNK_FLEXION = 14

    @property
    def key(self) -> str:
        return self.name.lower()


class Side(StrEnum):
    L = "L"
    R = "R"


class MuscleGroup(StrEnum):
    DELTOIDEUS = "deltoideus"
    PECTORALIS_MAJOR = "pectoralis_major"
    TRICEPS_BRACHII = "triceps_brachii"
    BICEPS_BRACHII_BRACHIALIS = "biceps_brachii_brachialis"
    LATISSIMUS_DORSI = "latissimus_dorsi"
    GLUTEUS_MAXIMUS = "gluteus_maximus"
    ISCHIOCRURALES = "ischiocrurales"
    QUADRICEPS_FEMORIS = "quadriceps_femoris"


UPPER_LIMB_GROUPS = (
    MuscleGroup.DELTOIDEUS,
    MuscleGroup.PECTORALIS_MAJOR,
    MuscleGroup.TRICEPS_BRACHII,
    MuscleGroup.BICEPS_BRACHII_BRACHIALIS,
    MuscleGroup.LATISSIMUS_DORSI,
)
LOWER_LIMB_GROUPS = (
    MuscleGroup.GLUTEUS_MAXIMUS,
    MuscleGroup.ISCHIOCRURALES,
    MuscleGroup.QUADRICEPS_FEMORIS,
)
LIMBS = ("left_upper", "right_upper", "left_lower", "right_lower")


def group_key(group: MuscleGroup, side: Side) -> str:
    return f"{group.value}_{side.value}"


# The 16 (group, side) signals in export order: left side first, then right.
GROUP_KEYS: tuple[str, ...] = tuple(
    group_key(g, s) for s in Side for g in (*UPPER_LIMB_GROUPS, *LOWER_LIMB_GROUPS)
)


class ExerciseKind(StrEnum):
    ARM_CIRCLES = "arm-circles"
    LUNGES = "lunges"
    SHOULDER_SQUEEZE = "shoulder-squeeze"
    SQUATS_ARMS = "squats-arms"
    SQUATS_NO_ARMS = "squats-no-arms"


class ArrayModel(BaseModel):
    """Base for frozen records that carry numpy arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class SkeletonFrame(ArrayModel):
    """One timestamped pose: 21 joint positions in meters, y up, right-handed."""

    t_ms: int = Field(ge=0)
    positions: np.ndarray
    confidence: np.ndarray = Field(default_factory=lambda: np.ones(len(JointId)))

    @field_validator("positions", "confidence", mode="before")
    @classmethod
    def _as_array(cls, value):
        return np.asarray(value, dtype=float)

    @model_validator(mode="after")
    def _check(self):
        if self.positions.shape != (len(JointId), 3):
            raise ValueError(f"positions must have shape (21, 3), got {self.positions.shape}")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("positions must be finite")
        if self.confidence.shape != (len(JointId),):
            raise ValueError("confidence must hold 21 values")
        if np.any((self.confidence < 0) | (self.confidence > 1)):
            raise ValueError("confidence values must lie in [0, 1]")
        return self

    def joint(self, joint: JointId) -> np.ndarray:
        return self.positions[joint]


class SessionStream(ArrayModel):
    """A recorded or generated session stored as stacked arrays."""

    t_ms: np.ndarray
    positions: np.ndarray
    confidence: np.ndarray
    rate_hz: float | None = None

    @field_validator("t_ms", mode="before")
    @classmethod
    def _as_int_array(cls, value):
        return np.asarray(value, dtype=np.int64)

    @field_validator("positions", "confidence", mode="before")
    @classmethod
    def _as_float_array(cls, value):
        return np.asarray(value, dtype=float)

    @model_validator(mode="after")
    def _check(self):
        n = len(self.t_ms)
        if self.positions.shape != (n, len(JointId), 3):
            raise ValueError(f"positions must have shape ({n}, 21, 3)")
        if self.confidence.shape != (n, len(JointId)):
            raise ValueError(f"confidence must have shape ({n}, 21)")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("positions must be finite")
        if n and np.any(self.t_ms < 0):
            raise ValueError("timestamps must be non-negative")
        if n > 1 and np.any(np.diff(self.t_ms) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        return self

    @classmethod
    def from_frames(cls, frames: list[SkeletonFrame], rate_hz: float | None = None):
        return cls(
            t_ms=[f.t_ms for f in frames],
            positions=np.stack([f.positions for f in frames]) if frames else np.empty((0, 21, 3)),
            confidence=(
                np.stack([f.confidence for f in frames]) if frames else np.empty((0, 21))
            ),
            rate_hz=rate_hz,
        )

    def __len__(self) -> int:
        return len(self.t_ms)

    def frame(self, i: int) -> SkeletonFrame:
        return SkeletonFrame(
            t_ms=int(self.t_ms[i]), positions=self.positions[i], confidence=self.confidence[i]
        )

    @property
    def frames(self) -> list[SkeletonFrame]:
        return [self.frame(i) for i in range(len(self))]

    @property
    def duration_s(self) -> float:
        if len(self) < 2:
            return 0.0
        return float(self.t_ms[-1] - self.t_ms[0]) / 1000.0


class BodyScale(BaseModel):
    """Bone lengths in meters keyed by the child joint of each bone."""

    lengths: dict[str, float]
    stature: float = Field(gt=0)

    @field_validator("lengths")
    @classmethod
    def _positive(cls, value: dict[str, float]) -> dict[str, float]:
        for name, length in value.items():
            if not length > 0:
                raise ValueError(f"bone length for {name} must be positive, got {length}")
        return value

    def length(self, child: JointId) -> float:
        return self.lengths[child.name]


class SegmentParameters(BaseModel):
    mass_frac: float = Field(gt=0, lt=1)
    com_frac: float = Field(gt=0, lt=1)
    gyration_frac: float = Field(gt=0, lt=1)


SegmentKind = Literal["trunk", "upper_arm", "forearm", "thigh", "shank", "foot"]


class SegmentModel(BaseModel):
    """Anthropometric table; limb fractions apply per side."""

    segments: dict[SegmentKind, SegmentParameters]

    @model_validator(mode="after")
    def _check_total(self):
        missing = {"trunk", "upper_arm", "forearm", "thigh", "shank", "foot"} - set(
            self.segments
        )
        if missing:
            raise ValueError(f"segment table lacks {sorted(missing)}")
        total = sum(
            p.mass_frac * (1 if name == "trunk" else 2) for name, p in self.segments.items()
        )
        if total > 1.0:
            raise ValueError(f"mass fractions sum to {total:.4f} > 1")
        return self


class JointAngleFrame(ArrayModel):
    """Angles (rad), velocities (rad/s) and accelerations (rad/s²) in DofId order."""

    t_ms: int
    angles: np.ndarray
    velocities: np.ndarray = Field(default_factory=lambda: np.zeros(len(DofId)))
    accelerations: np.ndarray = Field(default_factory=lambda: np.zeros(len(DofId)))

    @field_validator("angles", "velocities", "accelerations", mode="before")
    @classmethod
    def _as_array(cls, value):
        return np.asarray(value, dtype=float)

    @model_validator(mode="after")
    def _check(self):
        for name in ("angles", "velocities", "accelerations"):
            value = getattr(self, name)
            if value.shape != (len(DofId),) or not np.all(np.isfinite(value)):
                raise ValueError(f"{name} must be 15 finite values")
        if np.any(np.abs(self.angles) > np.pi + 1e-12):
            raise ValueError("angles must lie within [-pi, pi]")
        return self

    def angle(self, dof: DofId) -> float:
        return float(self.angles[dof])


class JointTorqueFrame(ArrayModel):
    t_ms: int
    torques: np.ndarray

    @field_validator("torques", mode="before")
    @classmethod
    def _as_array(cls, value):
        return np.asarray(value, dtype=float)

    def torque(self, dof: DofId) -> float:
        return float(self.torques[dof])


class SessionSummary(BaseModel):
    """Accumulated work of a session; work values are in N·s."""

    duration_s: float = 0.0
    frame_count: int = 0
    infeasible_frames: int = 0
    skipped_dofs: list[str] = []
    muscles: dict[str, float] = {}
    groups: dict[str, float] = Field(default_factory=lambda: dict.fromkeys(GROUP_KEYS, 0.0))
    limbs: dict[str, float] = Field(default_factory=lambda: dict.fromkeys(LIMBS, 0.0))
    overall: float = 0.0
    peak_window: dict[str, float] = Field(
        default_factory=lambda: dict.fromkeys(GROUP_KEYS, 0.0)
    )
    shares: dict[str, float] = {}
    limb_distribution: dict[str, list[float]] = {}


class SubjectProfile(BaseModel):
    age: float = Field(ge=10, le=100)
    mass: float | None = Field(default=None, ge=20, le=250)
    gender: Literal["male", "female", "unspecified"] = "unspecified"
    resting_hr: float | None = Field(default=None, ge=25, le=250)
    # Stored for completeness; no formula consumes it.
    vo2max: float | None = Field(default=None, gt=0)


class HeartRateSeries(BaseModel):
    samples: list[tuple[int, float]]

    @field_validator("samples")
    @classmethod
    def _check(cls, value: list[tuple[int, float]]) -> list[tuple[int, float]]:
        if not value:
            raise ValueError("heart-rate series is empty")
        for (t0, _), (t1, _) in zip(value, value[1:], strict=False):
            if t1 <= t0:
                raise ValueError(f"heart-rate timestamps must increase ({t0} then {t1})")
        for t, bpm in value:
            if not 25 <= bpm <= 250:
                raise ValueError(f"bpm {bpm} at t={t} ms outside [25, 250]")
        return value

    @property
    def avg_hr(self) -> float:
        return float(np.mean([bpm for _, bpm in self.samples]))

    @property
    def peak_hr(self) -> float:
        return float(max(bpm for _, bpm in self.samples))


RPE_LABELS = {
    1: "very light",
    2: "light",
    3: "light",
    4: "moderate",
    5: "moderate",
    6: "moderate",
    7: "vigorous",
    8: "vigorous",
    9: "very hard",
    10: "max effort",
}


class RpeRating(BaseModel):
    value: int = Field(ge=1, le=10)

    @property
    def label(self) -> str:
        return RPE_LABELS[self.value]


Verdict = Literal["Lower", "Equal", "Higher"]


class MeasureSet(BaseModel):
    bc_kcal: float = Field(ge=0)
    bc_method: Literal["heart-rate", "met"]
    rpe: int = Field(ge=1, le=10)
    rpe_predicted_hr: float
    verdict: Verdict
    mw_total: float = Field(ge=0)
    av_hr: float
    pk_hr: float
    h_mw_normalized: float | None = None


class ProtocolConfig(BaseModel):
    n_subjects: int = Field(default=10, ge=1)
    exercises: list[ExerciseKind] = Field(default_factory=lambda: list(ExerciseKind))
    n_measurements: int = Field(default=5, ge=1)
    reps_per_measurement: int = Field(default=5, ge=1)
    cadence_hz: float = Field(default=0.5, gt=0)
    noise_deg: float = Field(default=0.0, ge=0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    stature_range: tuple[float, float] = (0.9, 1.1)
    mass_range: tuple[float, float] = (55.0, 95.0)
    mirror_lunges: Literal["never", "alternate"] = "never"


class TrialResult(BaseModel):
    subject: int
    exercise: ExerciseKind
    measurement: int
    groups: dict[str, float]

    @field_validator("groups")
    @classmethod
    def _nonnegative(cls, value: dict[str, float]) -> dict[str, float]:
        if any(v < 0 for v in value.values()):
            raise ValueError("group work must be non-negative")
        return value


class AnovaResult(BaseModel):
    group: str
    f_stat: float = Field(ge=0)
    df_num: int
    df_den: int
    p_value: float = Field(ge=0, le=1)
    eta_sq: float = Field(ge=0, le=1)
    magnitude: Literal["", "s", "m", "l"]
    unbounded: bool = False


class PairwiseResult(BaseModel):
    group: str
    exercise_a: ExerciseKind
    exercise_b: ExerciseKind
    t_stat: float
    p_raw: float
    p_adjusted: float


class EffectCheck(BaseModel):
    value: float | None
    threshold: float
    passed: bool | None
    detail: str = ""


class EffectReport(BaseModel):
    checks: dict[str, EffectCheck]

    @property
    def all_passed(self) -> bool:
        return all(c.passed is not False for c in self.checks.values())
