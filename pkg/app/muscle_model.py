"""Musculoskeletal model schema, Hill-type relations and per-frame muscle states."""

import json
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator

from app.errors import (
    DofNotSpanned,
    DuplicateMuscle,
    MissingSegment,
    SchemaError,
    UncoveredGroup,
)
from app.kinematics import (
    FD_STEP,
    REFERENCE_BODY,
    SEGMENTS,
    AngleStream,
    Pose,
    build_pose,
    segment_length,
)
from app.models import ArrayModel, BodyScale, DofId, MuscleGroup, Side

logger = logging.getLogger(__name__)

ACTIVE_WIDTH = 0.45
PASSIVE_SCALE = 0.05
PASSIVE_SHAPE = 5.0
CONSISTENCY_TOL = 1e-6


class HillParameters(BaseModel):
    f_max: float = Field(gt=0, description="Maximum isometric force, N")
    v_max: float = Field(gt=0, description="Maximum shortening velocity, m/s")
    a: float = Field(gt=0, description="Hill force constant, N")
    b: float = Field(gt=0, description="Hill velocity constant, m/s")
    l0: float = Field(gt=0, description="Optimal fiber length, m")

    @classmethod
    def with_defaults(cls, f_max: float, l0: float) -> "HillParameters":
        """Classic Hill ratios: v_max = 10·l0/s, a = 0.25·f_max, b = 0.25·v_max."""
        v_max = 10.0 * l0
        return cls(f_max=f_max, v_max=v_max, a=0.25 * f_max, b=0.25 * v_max, l0=l0)


class Attachment(BaseModel):
    segment: str
    point: tuple[float, float, float]


class MuscleDefinition(BaseModel):
    name: str
    group: MuscleGroup
    side: Side
    attachments: list[Attachment] = Field(min_length=2)
    spanned_dofs: list[DofId] = Field(min_length=1)
    hill: HillParameters
    pcsa_cm2: float | None = Field(default=None, gt=0)

    @field_validator("spanned_dofs", mode="before")
    @classmethod
    def _dof_names(cls, value):
        return [DofId[v.upper()] if isinstance(v, str) else v for v in value]


class MusculoskeletalModel(BaseModel):
    version: str
    specific_tension: float = Field(default=30.0, gt=0)
    reference_body: BodyScale = REFERENCE_BODY
    muscles: list[MuscleDefinition]

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.muscles]


class _HillSpec(BaseModel):
    f_max: float | None = Field(default=None, gt=0)
    v_max: float | None = Field(default=None, gt=0)
    a: float | None = Field(default=None, gt=0)
    b: float | None = Field(default=None, gt=0)
    l0: float | None = Field(default=None, gt=0)


class _MuscleSpec(BaseModel):
    name: str
    group: MuscleGroup
    side: Side
    attachments: list[Attachment] = Field(min_length=2)
    spanned_dofs: list[str] = Field(min_length=1)
    hill: _HillSpec = _HillSpec()
    pcsa_cm2: float | None = Field(default=None, gt=0)


class _ModelFile(BaseModel):
    version: str
    specific_tension: float = Field(default=30.0, gt=0)
    optimal_length_ratio: float = Field(default=1.1, gt=0)
    reference_body: BodyScale | None = None
    muscles: list[_MuscleSpec]


def load_model(path: str | Path | None = None, specific_tension: float | None = None):
    """
    Load and validate a musculoskeletal model file.

    Args:
        path: JSON model file; the bundled 24-muscle model when None.
        specific_tension: Overrides the file's specific tension (N/cm²) when given.

    Returns:
        The validated MusculoskeletalModel with fully resolved Hill parameters.

    Raises:
        SchemaError: The file does not follow the documented schema.
        DuplicateMuscle: Two muscles share a name.
        UncoveredGroup: A (group, side) pair has no muscle.
    """
    if path is None:
        text = resources.files("app.data").joinpath("default_model.json").read_text("utf-8")
        source = "default_model.json"
    else:
        text = Path(path).read_text(encoding="utf-8")
        source = str(path)
    try:
        spec = _ModelFile.model_validate(json.loads(text))
    except json.JSONDecodeError as e:
        raise SchemaError(f"{source}: invalid JSON ({e})") from e
    except ValidationError as e:
        raise SchemaError(f"{source}: {e}") from e

    tension = specific_tension or spec.specific_tension
    reference = spec.reference_body or REFERENCE_BODY
    neutral = build_pose(np.zeros(len(DofId)), reference)

    seen: set[str] = set()
    muscles: list[MuscleDefinition] = []
    for m in spec.muscles:
        if m.name in seen:
            raise DuplicateMuscle(m.name)
        seen.add(m.name)
        attachments = [_resolve_segment(a, m.side, m.name) for a in m.attachments]
        try:
            dofs = [DofId[d.upper()] for d in m.spanned_dofs]
        except KeyError as e:
            raise SchemaError(f"{source}: muscle {m.name} spans unknown DOF {e}") from e

        if m.pcsa_cm2 is not None:
            f_max = m.pcsa_cm2 * tension
            if m.hill.f_max is not None and not np.isclose(m.hill.f_max, f_max):
                logger.warning("Muscle %s: f_max from PCSA (%.1f N) overrides file", m.name, f_max)
        elif m.hill.f_max is not None:
            f_max = m.hill.f_max
        else:
            raise SchemaError(f"{source}: muscle {m.name} needs pcsa_cm2 or hill.f_max")

        if m.hill.l0 is not None:
            l0 = m.hill.l0
        else:
            l0 = spec.optimal_length_ratio * _path_length(neutral, attachments)
        v_max = m.hill.v_max or 10.0 * l0
        a = m.hill.a or 0.25 * f_max
        b = m.hill.b or a * v_max / f_max
        if abs(a * v_max - b * f_max) > CONSISTENCY_TOL * b * f_max:
            repaired = a * v_max / f_max
            logger.warning(
                "Muscle %s: a·v_max != b·f_max, rescaling b from %.6g to %.6g", m.name, b, repaired
            )
            b = repaired

        muscles.append(
            MuscleDefinition(
                name=m.name,
                group=m.group,
                side=m.side,
                attachments=attachments,
                spanned_dofs=dofs,
                hill=HillParameters(f_max=f_max, v_max=v_max, a=a, b=b, l0=l0),
                pcsa_cm2=m.pcsa_cm2,
            )
        )

    covered = {(m.group, m.side) for m in muscles}
    for side in Side:
        for group in MuscleGroup:
            if (group, side) not in covered:
                raise UncoveredGroup(group.value, side.value)

    logger.info("Loaded model %s with %d muscles from %s", spec.version, len(muscles), source)
    return MusculoskeletalModel(
        version=spec.version,
        specific_tension=tension,
        reference_body=reference,
        muscles=muscles,
    )


def _resolve_segment(attachment: Attachment, side: Side, muscle: str) -> Attachment:
    name = attachment.segment
    if name != "trunk" and name not in SEGMENTS:
        name = f"{name}_{side.value}"
    if name not in SEGMENTS:
        raise SchemaError(f"muscle {muscle}: unknown segment {attachment.segment!r}")
    return Attachment(segment=name, point=attachment.point)


def _world_points(
    pose: Pose, attachments: list[Attachment], factors: dict[str, float] | None = None
) -> list[np.ndarray]:
    points = []
    for a in attachments:
        if a.segment not in pose.origins:
            raise MissingSegment(a.segment)
        local = np.asarray(a.point) * (factors[a.segment] if factors else 1.0)
        points.append(pose.to_world(a.segment, local))
    return points


def _path_length(
    pose: Pose, attachments: list[Attachment], factors: dict[str, float] | None = None
) -> np.ndarray:
    points = _world_points(pose, attachments, factors)
    return sum(
        np.linalg.norm(q - p, axis=-1) for p, q in zip(points, points[1:], strict=False)
    )


def muscle_length(
    m: MuscleDefinition, pose: Pose, factors: dict[str, float] | None = None
) -> float | np.ndarray:
    """
    Polyline length through the attachment points in world coordinates.

    Args:
        m: The muscle.
        pose: Segment frames, single or batched.
        factors: Optional per-segment multipliers applied to the local attachment points.

    Returns:
        Length in meters (an array for batched poses).
    """
    length = _path_length(pose, m.attachments, factors)
    return float(length) if np.ndim(length) == 0 else length


def moment_arm(
    m: MuscleDefinition, pose: Pose, dof: DofId, factors: dict[str, float] | None = None
) -> float | np.ndarray:
    """Tendon-excursion moment arm r = -dl/dθ by central difference (step 1e-5 rad)."""
    if dof not in m.spanned_dofs:
        raise DofNotSpanned(m.name, dof.key)
    step = np.zeros(len(DofId))
    step[dof] = FD_STEP
    plus = build_pose(pose.angles + step, pose.scale, pose.root)
    minus = build_pose(pose.angles - step, pose.scale, pose.root)
    r = -(_path_length(plus, m.attachments, factors) - _path_length(minus, m.attachments, factors))
    r = r / (2 * FD_STEP)
    return float(r) if np.ndim(r) == 0 else r


def force_velocity(v, p: HillParameters):
    """
    Contractile force capacity at optimal length for shortening velocity v (m/s).

    Shortening follows (F + a)(v + b) = (F_max + a)·b, zero beyond v_max; lengthening is
    clamped at F_max.
    """
    v = np.asarray(v, dtype=float)
    shortening = (p.f_max + p.a) * p.b / (np.maximum(v, 0.0) + p.b) - p.a
    force = np.where(v < 0, p.f_max, np.where(v > p.v_max, 0.0, np.maximum(shortening, 0.0)))
    return float(force) if force.ndim == 0 else force


def force_length(norm_length, p: HillParameters):
    """Active factor f_L and passive force F_PE (N) at normalized length l/l0."""
    x = np.asarray(norm_length, dtype=float)
    f_l = np.exp(-(((x - 1.0) / ACTIVE_WIDTH) ** 2))
    f_pe = np.where(x > 1.0, p.f_max * PASSIVE_SCALE * np.expm1(PASSIVE_SHAPE * (x - 1.0)), 0.0)
    if f_l.ndim == 0:
        return float(f_l), float(f_pe)
    return f_l, f_pe


class MuscleStateFrame(ArrayModel):
    """Per-muscle state of one frame; moment arms are (muscles, 15) in DofId order."""

    t_ms: int
    names: list[str]
    lengths: np.ndarray
    norm_lengths: np.ndarray
    velocities: np.ndarray
    moment_arms: np.ndarray


@dataclass(frozen=True)
class MuscleStates:
    t_ms: np.ndarray
    names: list[str]
    lengths: np.ndarray
    norm_lengths: np.ndarray
    velocities: np.ndarray
    moment_arms: np.ndarray

    def __len__(self) -> int:
        return len(self.t_ms)

    def frame(self, i: int) -> MuscleStateFrame:
        return MuscleStateFrame(
            t_ms=int(self.t_ms[i]),
            names=self.names,
            lengths=self.lengths[i],
            norm_lengths=self.norm_lengths[i],
            velocities=self.velocities[i],
            moment_arms=self.moment_arms[i],
        )


class MuscleGeometry:
    """The model's muscle paths fitted to one subject's body scale."""

    def __init__(self, model: MusculoskeletalModel, scale: BodyScale):
        self.model = model
        self.scale = scale
        self.factors = {
            segment: segment_length(scale, segment)
            / segment_length(model.reference_body, segment)
            for segment in SEGMENTS
        }
        reference = build_pose(np.zeros(len(DofId)), model.reference_body)
        subject = build_pose(np.zeros(len(DofId)), scale)
        self.l0 = np.array(
            [
                m.hill.l0
                * _path_length(subject, m.attachments, self.factors)
                / _path_length(reference, m.attachments)
                for m in model.muscles
            ]
        )
        self.spanned = sorted({d for m in model.muscles for d in m.spanned_dofs})

    def lengths(self, pose: Pose) -> np.ndarray:
        return np.stack(
            [_path_length(pose, m.attachments, self.factors) for m in self.model.muscles],
            axis=-1,
        )

    def states(self, angles: AngleStream) -> MuscleStates:
        """Lengths, shortening velocities and moment arms for every frame."""
        pose = build_pose(angles.angles, self.scale)
        lengths = self.lengths(pose)
        if len(angles) > 1:
            velocities = -np.gradient(lengths, 1.0 / angles.rate_hz, axis=0, edge_order=1)
        else:
            velocities = np.zeros_like(lengths)

        arms = np.zeros((*lengths.shape, len(DofId)))
        for dof in self.spanned:
            step = np.zeros(len(DofId))
            step[dof] = FD_STEP
            plus = self.lengths(build_pose(angles.angles + step, self.scale))
            minus = self.lengths(build_pose(angles.angles - step, self.scale))
            column = -(plus - minus) / (2 * FD_STEP)
            mask = np.array([dof in m.spanned_dofs for m in self.model.muscles])
            arms[..., dof] = np.where(mask, column, 0.0)

        return MuscleStates(
            t_ms=angles.t_ms,
            names=self.model.names,
            lengths=lengths,
            norm_lengths=lengths / self.l0,
            velocities=velocities,
            moment_arms=arms,
        )


def compute_states(angles: AngleStream, model: MusculoskeletalModel, scale: BodyScale):
    return MuscleGeometry(model, scale).states(angles)
