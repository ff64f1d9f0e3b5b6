import numpy as np
import pytest
from pydantic import ValidationError

from app.errors import AngleOutOfRange
from app.kinematics import (
    JOINT_RANGES,
    REFERENCE_BODY,
    compute_joint_angles,
    joint_angles,
    side_dofs,
)
from app.models import DofId, ExerciseKind, JointAngleFrame, JointId, Side
from app.synth import (
    MotionParams,
    forward_kinematics,
    generate,
    generate_angles,
    scaled_body,
    trajectory,
)


def test_default_session_length_and_timestamps():
    s = generate(ExerciseKind.SQUATS_NO_ARMS)
    assert len(s) == 600
    assert s.rate_hz == 60.0
    assert s.t_ms[:4].tolist() == [0, 17, 33, 50]
    assert s.t_ms[-1] == 9983


def test_frame_count_follows_reps_and_cadence():
    s = generate(ExerciseKind.LUNGES, MotionParams(reps=3, cadence_hz=0.25))
    assert len(s) == 720


@pytest.mark.parametrize("kind", list(ExerciseKind))
def test_lowest_ankle_on_the_ground(kind):
    s = generate(kind, MotionParams(reps=1))
    ankles = s.positions[:, [JointId.ANKLE_L, JointId.ANKLE_R], 1]
    np.testing.assert_allclose(ankles.min(axis=1), 0.0, atol=1e-12)


def test_deterministic_for_a_seed():
    p = MotionParams(reps=1, noise_deg=2.0, seed=42)
    a, b = generate(ExerciseKind.ARM_CIRCLES, p), generate(ExerciseKind.ARM_CIRCLES, p)
    np.testing.assert_array_equal(a.positions, b.positions)
    other = generate(ExerciseKind.ARM_CIRCLES, p.model_copy(update={"seed": 43}))
    assert not np.array_equal(a.positions, other.positions)


def test_noise_free_squat_is_mirror_symmetric():
    s = generate(ExerciseKind.SQUATS_NO_ARMS, MotionParams(reps=1))
    pairs = [(JointId[f"{p}_L"], JointId[f"{p}_R"]) for p in ("HIP", "KNEE", "ANKLE", "FOOT")]
    for left, right in pairs:
        np.testing.assert_allclose(s.positions[:, left, 0], -s.positions[:, right, 0], atol=1e-9)
        np.testing.assert_allclose(s.positions[:, left, 1:], s.positions[:, right, 1:], atol=1e-9)


def test_positions_recover_the_generated_angles():
    p = MotionParams(reps=1)
    _, angles = generate_angles(ExerciseKind.SQUATS_NO_ARMS, p)
    s = generate(ExerciseKind.SQUATS_NO_ARMS, p)
    np.testing.assert_allclose(joint_angles(s.positions), angles, atol=1e-6)


def test_lunge_front_leg_and_mirror():
    t = np.linspace(0.0, 2.0, 121)
    left, right = side_dofs(Side.L), side_dofs(Side.R)
    plain = trajectory(ExerciseKind.LUNGES, t, 0.5)
    mirrored = trajectory(ExerciseKind.LUNGES, t, 0.5, mirror=True)
    assert plain[:, right["knee_flexion"]].max() == pytest.approx(90.0)
    assert plain[:, left["knee_flexion"]].max() == pytest.approx(60.0)
    for name in ("hip_flexion", "knee_flexion"):
        np.testing.assert_array_equal(mirrored[:, left[name]], plain[:, right[name]])
        np.testing.assert_array_equal(mirrored[:, right[name]], plain[:, left[name]])


def test_squat_arms_only_adds_shoulder_flexion():
    t = np.linspace(0.0, 2.0, 121)
    no_arms = trajectory(ExerciseKind.SQUATS_NO_ARMS, t, 0.5)
    arms = trajectory(ExerciseKind.SQUATS_ARMS, t, 0.5)
    shoulders = [DofId.SHOULDER_FLEXION_L, DofId.SHOULDER_FLEXION_R]
    np.testing.assert_array_equal(arms[:, shoulders], 90.0)
    rest = [d for d in DofId if d not in shoulders]
    np.testing.assert_array_equal(arms[:, rest], no_arms[:, rest])


def test_noise_is_clipped_to_joint_ranges():
    _, angles = generate_angles(ExerciseKind.SHOULDER_SQUEEZE, MotionParams(noise_deg=30.0))
    assert np.all(angles >= JOINT_RANGES[:, 0])
    assert np.all(angles <= JOINT_RANGES[:, 1])
    elbow = angles[:, DofId.ELBOW_FLEXION_L]
    assert elbow.min() == pytest.approx(np.deg2rad(-10.0))


def test_forward_kinematics_rejects_out_of_range_angles():
    angles = np.zeros(len(DofId))
    angles[DofId.KNEE_FLEXION_R] = np.deg2rad(170.0)
    with pytest.raises(AngleOutOfRange):
        forward_kinematics(JointAngleFrame(t_ms=0, angles=angles), REFERENCE_BODY)


def test_forward_kinematics_neutral_pose():
    frame = forward_kinematics(JointAngleFrame(t_ms=5, angles=np.zeros(len(DofId))), REFERENCE_BODY)
    assert frame.t_ms == 5
    np.testing.assert_allclose(frame.positions[JointId.PELVIS], 0.0)


def test_scaled_body():
    body = scaled_body(1.1)
    assert body.stature == pytest.approx(REFERENCE_BODY.stature * 1.1)
    assert body.lengths["KNEE_L"] == pytest.approx(REFERENCE_BODY.lengths["KNEE_L"] * 1.1)
    assert MotionParams(stature=1.1).body() == body


def test_motion_params_validation():
    with pytest.raises(ValidationError):
        MotionParams(reps=0)
    with pytest.raises(ValidationError):
        MotionParams(seed=-1)


def test_forward_kinematics_round_trip_within_ranges():
    rng = np.random.default_rng(11)
    margin = np.deg2rad(5.0)
    for _ in range(50):
        angles = rng.uniform(JOINT_RANGES[:, 0] + margin, JOINT_RANGES[:, 1] - margin)
        frame = forward_kinematics(JointAngleFrame(t_ms=0, angles=angles), REFERENCE_BODY)
        recovered = compute_joint_angles(frame, REFERENCE_BODY).angles
        np.testing.assert_allclose(recovered, angles, atol=1e-6)
