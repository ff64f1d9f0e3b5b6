"""
Joint angles, their derivatives, the 15-DOF forward pose and quasi-static inverse dynamics.

All geometry is batched: angle arrays carry the 15 DOFs on the last axis and any number of
leading axes (frames, perturbations). Conventions are documented in docs/dof.md.
"""

import json
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from app.errors import DegeneratePose, InputError, SchemaError, TooFewFrames
from app.models import (
    BodyScale,
    DofId,
    JointAngleFrame,
    JointId,
    JointTorqueFrame,
    SegmentModel,
    SessionStream,
    Side,
    SkeletonFrame,
)

logger = logging.getLogger(__name__)

GRAVITY = 9.81
FD_STEP = 1e-5
J = JointId
D = DofId

# Reference body used for the bundled model and for synthetic subjects (stature multiplier 1).
REFERENCE_LENGTHS: dict[str, float] = {
    "SPINE_NAVEL": 0.20,
    "SPINE_CHEST": 0.17,
    "NECK": 0.20,
    "HEAD": 0.12,
    **{
        f"{joint}_{side}": length
        for side in ("L", "R")
        for joint, length in (
            ("CLAVICLE", 0.05),
            ("SHOULDER", 0.14),
            ("ELBOW", 0.30),
            ("WRIST", 0.26),
            ("HIP", 0.09),
            ("KNEE", 0.43),
            ("ANKLE", 0.42),
            ("FOOT", 0.15),
        )
    },
}
REFERENCE_BODY = BodyScale(lengths=REFERENCE_LENGTHS, stature=0.69 + 0.43 + 0.42)

# Joint ranges in degrees, indexed like DofId.
_SIDE_RANGES = [(-90, 180), (-45, 90), (-10, 160), (-45, 130), (-45, 60), (-10, 160), (-50, 40)]
JOINT_RANGES = np.deg2rad(np.array([*_SIDE_RANGES, *_SIDE_RANGES, (-45, 90)], dtype=float))

SEGMENTS = ("trunk",) + tuple(
    f"{name}_{side}"
    for side in ("L", "R")
    for name in ("upper_arm", "forearm", "thigh", "shank", "foot")
)


def side_dofs(side: Side) -> dict[str, DofId]:
    return {
        name: D[f"{name.upper()}_{side.value}"]
        for name in (
            "shoulder_flexion",
            "shoulder_abduction",
            "elbow_flexion",
            "hip_flexion",
            "hip_abduction",
            "knee_flexion",
            "ankle_flexion",
        )
    }


def rot_x(theta: np.ndarray) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    one, zero = np.ones_like(c), np.zeros_like(c)
    return np.stack(
        [np.stack([one, zero, zero], -1), np.stack([zero, c, -s], -1), np.stack([zero, s, c], -1)],
        -2,
    )


def rot_z(theta: np.ndarray) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    one, zero = np.ones_like(c), np.zeros_like(c)
    return np.stack(
        [np.stack([c, -s, zero], -1), np.stack([s, c, zero], -1), np.stack([zero, zero, one], -1)],
        -2,
    )


def _apply(rotation: np.ndarray, vector) -> np.ndarray:
    return np.einsum("...ij,...j->...i", rotation, np.broadcast_to(vector, rotation.shape[:-1]))


@dataclass(frozen=True)
class Pose:
    """World joint positions and segment frames for a batch of angle vectors."""

    joints: np.ndarray
    origins: dict[str, np.ndarray]
    rotations: dict[str, np.ndarray]
    angles: np.ndarray
    scale: BodyScale
    root: np.ndarray | None = None

    def to_world(self, segment: str, local: np.ndarray) -> np.ndarray:
        return self.origins[segment] + _apply(self.rotations[segment], local)


def build_pose(angles: np.ndarray, scale: BodyScale, root: np.ndarray | None = None) -> Pose:
    """
    Place the 21 joints and the 11 segment frames from the pelvis outward.

    Args:
        angles: Array of shape (..., 15) in DofId order, radians.
        scale: Bone lengths of the subject.
        root: Pelvis world position, shape (..., 3); origin when omitted.

    Returns:
        The Pose; all angles zero gives the neutral standing pose facing +z.
    """
    angles = np.asarray(angles, dtype=float)
    batch = angles.shape[:-1]
    pelvis = np.zeros((*batch, 3)) if root is None else np.broadcast_to(root, (*batch, 3))
    L = scale.lengths
    joints = np.zeros((*batch, len(JointId), 3))
    origins: dict[str, np.ndarray] = {}
    rotations: dict[str, np.ndarray] = {}

    r_trunk = rot_x(angles[..., D.TRUNK_FLEXION])
    origins["trunk"], rotations["trunk"] = pelvis, r_trunk
    joints[..., J.PELVIS, :] = pelvis

    height = 0.0
    for joint in (J.SPINE_NAVEL, J.SPINE_CHEST, J.NECK, J.HEAD):
        height += L[joint.name]
        joints[..., joint, :] = pelvis + _apply(r_trunk, [0.0, height, 0.0])
    chest_height = L["SPINE_NAVEL"] + L["SPINE_CHEST"]

    for side in Side:
        sx = 1.0 if side is Side.L else -1.0
        dof = side_dofs(side)
        s = side.value

        clavicle = [sx * L[f"CLAVICLE_{s}"], chest_height, 0.0]
        shoulder = [sx * (L[f"CLAVICLE_{s}"] + L[f"SHOULDER_{s}"]), chest_height, 0.0]
        joints[..., J[f"CLAVICLE_{s}"], :] = pelvis + _apply(r_trunk, clavicle)
        p_shoulder = pelvis + _apply(r_trunk, shoulder)
        joints[..., J[f"SHOULDER_{s}"], :] = p_shoulder

        r_upper = (
            r_trunk
            @ rot_z(sx * angles[..., dof["shoulder_abduction"]])
            @ rot_x(-angles[..., dof["shoulder_flexion"]])
        )
        p_elbow = p_shoulder + _apply(r_upper, [0.0, -L[f"ELBOW_{s}"], 0.0])
        r_fore = r_upper @ rot_x(-angles[..., dof["elbow_flexion"]])
        p_wrist = p_elbow + _apply(r_fore, [0.0, -L[f"WRIST_{s}"], 0.0])
        joints[..., J[f"ELBOW_{s}"], :] = p_elbow
        joints[..., J[f"WRIST_{s}"], :] = p_wrist

        p_hip = pelvis + _apply(r_trunk, [sx * L[f"HIP_{s}"], 0.0, 0.0])
        r_thigh = (
            r_trunk
            @ rot_x(-angles[..., dof["hip_flexion"]])
            @ rot_z(sx * angles[..., dof["hip_abduction"]])
        )
        p_knee = p_hip + _apply(r_thigh, [0.0, -L[f"KNEE_{s}"], 0.0])
        r_shank = r_thigh @ rot_x(angles[..., dof["knee_flexion"]])
        p_ankle = p_knee + _apply(r_shank, [0.0, -L[f"ANKLE_{s}"], 0.0])
        r_foot = r_shank @ rot_x(-angles[..., dof["ankle_flexion"]])
        p_foot = p_ankle + _apply(r_foot, [0.0, 0.0, L[f"FOOT_{s}"]])
        for name, p in (("HIP", p_hip), ("KNEE", p_knee), ("ANKLE", p_ankle), ("FOOT", p_foot)):
            joints[..., J[f"{name}_{s}"], :] = p

        for segment, origin, rotation in (
            ("upper_arm", p_shoulder, r_upper),
            ("forearm", p_elbow, r_fore),
            ("thigh", p_hip, r_thigh),
            ("shank", p_knee, r_shank),
            ("foot", p_ankle, r_foot),
        ):
            origins[f"{segment}_{s}"] = origin
            rotations[f"{segment}_{s}"] = rotation

    return Pose(
        joints=joints, origins=origins, rotations=rotations, angles=angles, scale=scale, root=root
    )


def _unit(v: np.ndarray, parent: JointId, child: JointId) -> np.ndarray:
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm < 1e-6):
        raise DegeneratePose(parent.name, child.name)
    return v / norm


def _local(rotation: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...ji,...j->...i", rotation, v)


def joint_angles(positions: np.ndarray) -> np.ndarray:
    """Batched inverse of build_pose: positions (..., 21, 3) to angles (..., 15)."""
    P = np.asarray(positions, dtype=float)
    angles = np.zeros((*P.shape[:-2], len(DofId)))
    up = np.array([0.0, 1.0, 0.0])

    lateral = _unit(P[..., J.HIP_L, :] - P[..., J.HIP_R, :], J.HIP_R, J.HIP_L)
    trunk = P[..., J.SPINE_CHEST, :] - P[..., J.PELVIS, :]
    trunk = trunk - np.sum(trunk * lateral, axis=-1, keepdims=True) * lateral
    trunk_up = _unit(trunk, J.PELVIS, J.SPINE_CHEST)
    forward = np.cross(lateral, trunk_up)
    heading = np.cross(lateral, up)
    heading = heading / np.linalg.norm(heading, axis=-1, keepdims=True)
    angles[..., D.TRUNK_FLEXION] = np.arctan2(
        np.sum(trunk_up * heading, axis=-1), trunk_up[..., 1]
    )
    r_trunk = np.stack([lateral, trunk_up, forward], axis=-1)

    for side in Side:
        sx = 1.0 if side is Side.L else -1.0
        dof = side_dofs(side)
        s = side.value
        shoulder, elbow, wrist = (J[f"{n}_{s}"] for n in ("SHOULDER", "ELBOW", "WRIST"))
        hip, knee, ankle, foot = (J[f"{n}_{s}"] for n in ("HIP", "KNEE", "ANKLE", "FOOT"))

        d = _local(r_trunk, _unit(P[..., elbow, :] - P[..., shoulder, :], shoulder, elbow))
        minus_y = -d[..., 1]
        sigma = np.where(minus_y > 0, 1.0, np.where(minus_y < 0, -1.0, 1.0))
        sigma = np.where((minus_y == 0) & (sx * d[..., 0] < 0), -1.0, sigma)
        abduction = np.arctan2(sigma * sx * d[..., 0], np.abs(d[..., 1]))
        flexion = np.arctan2(d[..., 2], sigma * np.hypot(d[..., 0], d[..., 1]))
        angles[..., dof["shoulder_abduction"]] = abduction
        angles[..., dof["shoulder_flexion"]] = flexion
        r_upper = r_trunk @ rot_z(sx * abduction) @ rot_x(-flexion)

        f = _local(r_upper, _unit(P[..., wrist, :] - P[..., elbow, :], elbow, wrist))
        angles[..., dof["elbow_flexion"]] = np.arctan2(f[..., 2], -f[..., 1])

        t = _local(r_trunk, _unit(P[..., knee, :] - P[..., hip, :], hip, knee))
        hip_abduction = np.arcsin(np.clip(sx * t[..., 0], -1.0, 1.0))
        hip_flexion = np.arctan2(t[..., 2], -t[..., 1])
        angles[..., dof["hip_abduction"]] = hip_abduction
        angles[..., dof["hip_flexion"]] = hip_flexion
        r_thigh = r_trunk @ rot_x(-hip_flexion) @ rot_z(sx * hip_abduction)

        sh = _local(r_thigh, _unit(P[..., ankle, :] - P[..., knee, :], knee, ankle))
        knee_flexion = np.arctan2(-sh[..., 2], -sh[..., 1])
        angles[..., dof["knee_flexion"]] = knee_flexion
        r_shank = r_thigh @ rot_x(knee_flexion)

        ft = _local(r_shank, _unit(P[..., foot, :] - P[..., ankle, :], ankle, foot))
        angles[..., dof["ankle_flexion"]] = np.arctan2(ft[..., 1], ft[..., 2])

    return angles


def compute_joint_angles(f: SkeletonFrame, scale: BodyScale) -> JointAngleFrame:
    """Angles of one frame; velocities and accelerations are left at zero."""
    return JointAngleFrame(t_ms=f.t_ms, angles=joint_angles(f.positions))


def differentiate(angles: np.ndarray, rate_hz: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Central differences inside, one-sided at both ends.

    Args:
        angles: Uniformly sampled angles, shape (n, ...).
        rate_hz: Sampling rate.

    Returns:
        Velocities and accelerations with the same shape as angles.
    """
    angles = np.asarray(angles, dtype=float)
    if len(angles) < 3:
        raise TooFewFrames(3, len(angles))
    dt = 1.0 / rate_hz
    unwrapped = np.unwrap(angles, axis=0)
    velocities = np.gradient(unwrapped, dt, axis=0, edge_order=1)
    accelerations = np.gradient(velocities, dt, axis=0, edge_order=1)
    return velocities, accelerations


@dataclass(frozen=True)
class AngleStream:
    t_ms: np.ndarray
    angles: np.ndarray
    velocities: np.ndarray
    accelerations: np.ndarray
    rate_hz: float

    def __len__(self) -> int:
        return len(self.t_ms)

    def frame(self, i: int) -> JointAngleFrame:
        return JointAngleFrame(
            t_ms=int(self.t_ms[i]),
            angles=self.angles[i],
            velocities=self.velocities[i],
            accelerations=self.accelerations[i],
        )


def stream_rate(s: SessionStream) -> float:
    if s.rate_hz:
        return s.rate_hz
    return 1000.0 / float(np.median(np.diff(s.t_ms)))


def angle_stream(s: SessionStream) -> AngleStream:
    """Angles, velocities and accelerations for every frame of a uniform stream."""
    rate = stream_rate(s)
    angles = joint_angles(s.positions)
    velocities, accelerations = differentiate(angles, rate)
    return AngleStream(s.t_ms, angles, velocities, accelerations, rate)


def load_segment_model(path: str | Path | None = None) -> SegmentModel:
    """Load the anthropometric table; the bundled one when no path is given."""
    if path is None:
        text = resources.files("app.data").joinpath("segments.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    try:
        return SegmentModel(segments=json.loads(text))
    except (json.JSONDecodeError, ValidationError) as e:
        raise SchemaError(f"segment table {path or 'segments.json'}: {e}") from e


# Segment -> (proximal joint, distal joint) defining its length and COM axis.
_SEGMENT_AXES: dict[str, tuple[str, str]] = {
    "trunk": ("PELVIS", "NECK"),
    **{
        f"{segment}_{s}": (f"{a}_{s}", f"{b}_{s}")
        for s in ("L", "R")
        for segment, a, b in (
            ("upper_arm", "SHOULDER", "ELBOW"),
            ("forearm", "ELBOW", "WRIST"),
            ("thigh", "HIP", "KNEE"),
            ("shank", "KNEE", "ANKLE"),
            ("foot", "ANKLE", "FOOT"),
        )
    },
}


def distal_segments(dof: DofId) -> tuple[str, ...]:
    if dof is D.TRUNK_FLEXION:
        return ("trunk", "upper_arm_L", "forearm_L", "upper_arm_R", "forearm_R")
    name, s = dof.key.rsplit("_", 1)
    s = s.upper()
    chains = {
        "shoulder_flexion": ("upper_arm", "forearm"),
        "shoulder_abduction": ("upper_arm", "forearm"),
        "elbow_flexion": ("forearm",),
        "hip_flexion": ("thigh", "shank", "foot"),
        "hip_abduction": ("thigh", "shank", "foot"),
        "knee_flexion": ("shank", "foot"),
        "ankle_flexion": ("foot",),
    }
    return tuple(f"{segment}_{s}" for segment in chains[name])


def _segment_com(pose: Pose, segment: str, seg: SegmentModel) -> np.ndarray:
    a, b = _SEGMENT_AXES[segment]
    frac = seg.segments[segment.rsplit("_", 1)[0] if segment != "trunk" else "trunk"].com_frac
    pa, pb = pose.joints[..., J[a], :], pose.joints[..., J[b], :]
    return pa + frac * (pb - pa)


def segment_length(scale: BodyScale, segment: str) -> float:
    """Proximal-to-distal length of a segment; the trunk runs from pelvis to neck."""
    if segment == "trunk":
        return sum(scale.lengths[j] for j in ("SPINE_NAVEL", "SPINE_CHEST", "NECK"))
    return scale.lengths[_SEGMENT_AXES[segment][1]]


def torque_stream(
    angles: np.ndarray,
    accelerations: np.ndarray,
    mass_kg: float,
    scale: BodyScale,
    seg: SegmentModel,
) -> np.ndarray:
    """
    Quasi-static joint torques for a batch of frames, shape (..., 15).

    Each DOF carries the generalized gravity force of its distal segments plus a single-DOF
    inertial term I·α with I from point masses at the segment centers plus their radii of
    gyration. Derivatives along each DOF use central differences of the forward pose.
    """
    if not mass_kg > 0:
        raise InputError(f"body mass must be positive, got {mass_kg}")
    angles = np.asarray(angles, dtype=float)
    torques = np.zeros_like(angles)
    masses = {
        name: mass_kg * seg.segments["trunk" if name == "trunk" else name[:-2]].mass_frac
        for name in SEGMENTS
    }

    for dof in DofId:
        step = np.zeros(len(DofId))
        step[dof] = FD_STEP
        plus = build_pose(angles + step, scale)
        minus = build_pose(angles - step, scale)
        gravity = np.zeros(angles.shape[:-1])
        inertia = np.zeros(angles.shape[:-1])
        for segment in distal_segments(dof):
            m = masses[segment]
            dc = (_segment_com(plus, segment, seg) - _segment_com(minus, segment, seg)) / (
                2 * FD_STEP
            )
            radius = seg.segments[
                "trunk" if segment == "trunk" else segment[:-2]
            ].gyration_frac * segment_length(scale, segment)
            gravity += m * dc[..., 1]
            inertia += m * (np.sum(dc * dc, axis=-1) + radius**2)
        torques[..., dof] = GRAVITY * gravity + inertia * accelerations[..., dof]
    return torques


def inverse_dynamics(
    frame: JointAngleFrame, mass_kg: float, scale: BodyScale, seg: SegmentModel
) -> JointTorqueFrame:
    torques = torque_stream(frame.angles, frame.accelerations, mass_kg, scale, seg)
    return JointTorqueFrame(t_ms=frame.t_ms, torques=torques)
