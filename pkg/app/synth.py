"""Synthetic exercise sessions from parametric joint-angle trajectories."""

import logging

import numpy as np
from pydantic import BaseModel, Field

from app.errors import AngleOutOfRange
from app.kinematics import JOINT_RANGES, REFERENCE_BODY, build_pose, side_dofs
from app.models import (
    BodyScale,
    DofId,
    ExerciseKind,
    JointAngleFrame,
    JointId,
    SessionStream,
    Side,
    SkeletonFrame,
)

logger = logging.getLogger(__name__)

RATE_HZ = 60.0
RANGE_SLACK = 1e-9


class MotionParams(BaseModel):
    reps: int = Field(default=5, ge=1)
    cadence_hz: float = Field(default=0.5, gt=0)
    noise_deg: float = Field(default=0.0, ge=0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    stature: float = Field(default=1.0, gt=0, description="Multiplier on the reference body")
    scale: BodyScale | None = Field(default=None, description="Explicit body, overrides stature")
    mirror: bool = Field(default=False, description="Lunge with the left leg in front")

    def body(self) -> BodyScale:
        if self.scale is not None:
            return self.scale
        return scaled_body(self.stature)


def scaled_body(stature: float) -> BodyScale:
    return BodyScale(
        lengths={k: v * stature for k, v in REFERENCE_BODY.lengths.items()},
        stature=REFERENCE_BODY.stature * stature,
    )


def forward_kinematics(angles: JointAngleFrame, scale: BodyScale) -> SkeletonFrame:
    """Place the 21 joints for one angle vector, pelvis at the origin."""
    for dof in DofId:
        lo, hi = JOINT_RANGES[dof]
        value = angles.angles[dof]
        if value < lo - RANGE_SLACK or value > hi + RANGE_SLACK:
            raise AngleOutOfRange(dof.key, float(value))
    pose = build_pose(angles.angles, scale)
    return SkeletonFrame(t_ms=angles.t_ms, positions=pose.joints)


def _rep_phase(t: np.ndarray, cadence_hz: float) -> np.ndarray:
    """Raised cosine: 0 at the start of each rep, 1 at mid-rep."""
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * cadence_hz * t))


def trajectory(kind: ExerciseKind, t: np.ndarray, cadence_hz: float, mirror: bool = False):
    """
    Noise-free joint angles in degrees for each time in t (seconds), shape (len(t), 15).

    Squats bend hip, knee and ankle together; lunges put the right leg in front unless mirrored.
    """
    g = _rep_phase(t, cadence_hz)
    angles = np.zeros((len(t), len(DofId)))
    left, right = side_dofs(Side.L), side_dofs(Side.R)

    if kind in (ExerciseKind.SQUATS_NO_ARMS, ExerciseKind.SQUATS_ARMS):
        for dofs in (left, right):
            angles[:, dofs["hip_flexion"]] = 80.0 * g
            angles[:, dofs["knee_flexion"]] = 90.0 * g
            angles[:, dofs["ankle_flexion"]] = 25.0 * g
            if kind is ExerciseKind.SQUATS_ARMS:
                angles[:, dofs["shoulder_flexion"]] = 90.0
    elif kind is ExerciseKind.LUNGES:
        front, rear = (left, right) if mirror else (right, left)
        angles[:, front["hip_flexion"]] = 10.0 + 60.0 * g
        angles[:, front["knee_flexion"]] = 20.0 + 70.0 * g
        angles[:, rear["hip_flexion"]] = -20.0
        angles[:, rear["knee_flexion"]] = 10.0 + 50.0 * g
    elif kind is ExerciseKind.ARM_CIRCLES:
        swing = 15.0 * np.sin(2.0 * np.pi * 4.0 * cadence_hz * t)
        for dofs in (left, right):
            angles[:, dofs["shoulder_abduction"]] = 90.0
            angles[:, dofs["shoulder_flexion"]] = swing
    elif kind is ExerciseKind.SHOULDER_SQUEEZE:
        for dofs in (left, right):
            angles[:, dofs["shoulder_flexion"]] = 170.0
            angles[:, dofs["elbow_flexion"]] = 90.0 * g
    return angles


def generate_angles(kind: ExerciseKind, p: MotionParams) -> tuple[np.ndarray, np.ndarray]:
    """Timestamps (ms) and joint angles (rad) of a session, noise included."""
    n = int(round(p.reps / p.cadence_hz * RATE_HZ))
    frames = np.arange(n)
    t_ms = np.floor(frames * 1000.0 / RATE_HZ + 0.5).astype(np.int64)
    angles = np.deg2rad(trajectory(kind, frames / RATE_HZ, p.cadence_hz, p.mirror))
    if p.noise_deg > 0:
        rng = np.random.default_rng(p.seed)
        angles = angles + rng.normal(0.0, np.deg2rad(p.noise_deg), size=angles.shape)
        angles = np.clip(angles, JOINT_RANGES[:, 0], JOINT_RANGES[:, 1])
    return t_ms, angles


def generate(kind: ExerciseKind, p: MotionParams | None = None) -> SessionStream:
    """
    Generate a 60 Hz skeleton session of p.reps repetitions.

    Args:
        kind: The exercise.
        p: Repetitions, cadence, angle noise, seed and body; defaults when None.

    Returns:
        A SessionStream whose lower ankle rests at ground height (y = 0) in every frame.
    """
    p = p or MotionParams()
    scale = p.body()
    t_ms, angles = generate_angles(kind, p)
    pose = build_pose(angles, scale)
    ankles = pose.joints[:, [JointId.ANKLE_L, JointId.ANKLE_R], 1]
    lift = -ankles.min(axis=1)
    positions = pose.joints + np.stack([np.zeros_like(lift), lift, np.zeros_like(lift)], -1)[
        :, None, :
    ]
    logger.debug("Generated %s: %d frames, seed %d", kind.value, len(t_ms), p.seed)
    return SessionStream(
        t_ms=t_ms,
        positions=positions,
        confidence=np.ones(positions.shape[:2]),
        rate_hz=RATE_HZ,
    )
