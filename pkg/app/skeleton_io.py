import json
import logging
from pathlib import Path
from typing import Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.errors import (
    DegeneratePose,
    InputError,
    MalformedRecord,
    MissingJoint,
    NonMonotonicTimestamp,
    TooFewFrames,
    WindowTooLarge,
)
from app.models import BodyScale, JointId, SessionStream
from app.serialization import sig9

logger = logging.getLogger(__name__)

SessionFormat = Literal["canonical-jsonl", "kinect32-jsonl"]

J = JointId

# Parent -> child, one entry per bone; a bone is named after its child joint.
BONES: tuple[tuple[JointId, JointId], ...] = (
    (J.PELVIS, J.SPINE_NAVEL),
    (J.SPINE_NAVEL, J.SPINE_CHEST),
    (J.SPINE_CHEST, J.NECK),
    (J.NECK, J.HEAD),
    (J.SPINE_CHEST, J.CLAVICLE_L),
    (J.CLAVICLE_L, J.SHOULDER_L),
    (J.SHOULDER_L, J.ELBOW_L),
    (J.ELBOW_L, J.WRIST_L),
    (J.PELVIS, J.HIP_L),
    (J.HIP_L, J.KNEE_L),
    (J.KNEE_L, J.ANKLE_L),
    (J.ANKLE_L, J.FOOT_L),
    (J.SPINE_CHEST, J.CLAVICLE_R),
    (J.CLAVICLE_R, J.SHOULDER_R),
    (J.SHOULDER_R, J.ELBOW_R),
    (J.ELBOW_R, J.WRIST_R),
    (J.PELVIS, J.HIP_R),
    (J.HIP_R, J.KNEE_R),
    (J.KNEE_R, J.ANKLE_R),
    (J.ANKLE_R, J.FOOT_R),
)

# Body Tracking SDK names for the joints we keep; everything else is dropped.
KINECT32_NAMES: dict[str, JointId] = {
    "PELVIS": J.PELVIS,
    "SPINE_NAVEL": J.SPINE_NAVEL,
    "SPINE_CHEST": J.SPINE_CHEST,
    "NECK": J.NECK,
    "HEAD": J.HEAD,
    **{
        f"{part}_{sdk_side}": J[f"{part}_{side}"]
        for sdk_side, side in (("LEFT", "L"), ("RIGHT", "R"))
        for part in ("CLAVICLE", "SHOULDER", "ELBOW", "WRIST", "HIP", "KNEE", "ANKLE", "FOOT")
    },
}
KINECT32_DROPPED = frozenset(
    {"NOSE", "EYE_LEFT", "EAR_LEFT", "EYE_RIGHT", "EAR_RIGHT"}
    | {f"{p}_{s}" for p in ("HAND", "HANDTIP", "THUMB") for s in ("LEFT", "RIGHT")}
)
CANONICAL_NAMES: dict[str, JointId] = {j.name: j for j in JointId}


class _Record(BaseModel):
    """One line of a jsonl session; unknown fields are ignored."""

    model_config = ConfigDict(extra="ignore")

    t_ms: int = Field(ge=0, strict=True)
    joints: dict[str, tuple[float, float, float]]
    conf: dict[str, float] | None = None


def parse_session(data: str | bytes, fmt: SessionFormat = "canonical-jsonl") -> SessionStream:
    """
    Parse a line-delimited skeleton stream.

    Args:
        data: The raw text of the stream, one JSON record per line.
        fmt: Joint naming of the records.

    Returns:
        A SessionStream with strictly increasing timestamps.

    Raises:
        MalformedRecord: A line is not a valid record, or the stream is empty.
        NonMonotonicTimestamp: A timestamp does not exceed its predecessor.
        MissingJoint: A required joint is absent from a record.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    names = CANONICAL_NAMES if fmt == "canonical-jsonl" else KINECT32_NAMES

    t_ms: list[int] = []
    positions: list[np.ndarray] = []
    confidence: list[np.ndarray] = []
    for line_no, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = _Record.model_validate_json(line)
        except ValidationError as e:
            raise MalformedRecord(line_no, _first_error(e)) from e

        pos = np.empty((len(JointId), 3))
        conf = np.ones(len(JointId))
        for name, joint in names.items():
            if name not in record.joints:
                raise MissingJoint(name, line_no)
            pos[joint] = record.joints[name]
            if record.conf and name in record.conf:
                conf[joint] = record.conf[name]
        if not np.all(np.isfinite(pos)):
            raise MalformedRecord(line_no, "non-finite position")
        if np.any((conf < 0) | (conf > 1)):
            raise MalformedRecord(line_no, "confidence outside [0, 1]")
        if t_ms and record.t_ms <= t_ms[-1]:
            raise NonMonotonicTimestamp(line_no, record.t_ms, t_ms[-1])

        t_ms.append(record.t_ms)
        positions.append(pos)
        confidence.append(conf)

    if not t_ms:
        raise MalformedRecord(1, "no frames")
    logger.debug("Parsed %d frames (%s)", len(t_ms), fmt)
    return SessionStream(t_ms=t_ms, positions=np.stack(positions), confidence=np.stack(confidence))


def _first_error(e: ValidationError) -> str:
    err = e.errors()[0]
    where = ".".join(str(p) for p in err.get("loc", ()))
    return f"{where}: {err['msg']}" if where else err["msg"]


def detect_format(data: str) -> SessionFormat:
    """Pick kinect32 when the first record uses any SDK-only joint name."""
    for line in data.splitlines():
        if line.strip():
            try:
                joints = json.loads(line).get("joints", {})
            except (json.JSONDecodeError, AttributeError):
                return "canonical-jsonl"
            sdk_only = (set(KINECT32_NAMES) - set(CANONICAL_NAMES)) | KINECT32_DROPPED
            return "kinect32-jsonl" if sdk_only & set(joints) else "canonical-jsonl"
    return "canonical-jsonl"


def read_session(path: str | Path, fmt: SessionFormat | Literal["auto"] = "auto") -> SessionStream:
    data = Path(path).read_text(encoding="utf-8")
    if fmt == "auto":
        fmt = detect_format(data)
    return parse_session(data, fmt)


def serialize_session(s: SessionStream) -> str:
    """Render a stream as canonical-jsonl with floats at 9 significant digits."""
    lines = []
    for i in range(len(s)):
        record: dict = {
            "t_ms": int(s.t_ms[i]),
            "joints": {j.name: [sig9(v) for v in s.positions[i, j]] for j in JointId},
        }
        if np.any(s.confidence[i] != 1.0):
            record["conf"] = {j.name: sig9(s.confidence[i, j]) for j in JointId}
        lines.append(json.dumps(record, separators=(",", ":")))
    return "\n".join(lines) + ("\n" if lines else "")


def write_session(s: SessionStream, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(serialize_session(s), encoding="utf-8")
    return path


def resample(s: SessionStream, rate_hz: float = 60.0) -> SessionStream:
    """
    Resample onto a uniform grid by per-component linear interpolation.

    The grid starts at the first timestamp with spacing 1000/rate_hz ms and always ends exactly at
    the final timestamp: a last grid point within 1 ms of it is snapped onto it, otherwise the
    final timestamp is appended. A stream whose every sample lies within 1 ms of the grid keeps
    its recorded samples untouched and only has its rate set.

    Stored timestamps are the grid times rounded half-up to whole milliseconds, so consecutive
    spacing may differ by 1 ms (16 or 17 ms at 60 Hz). The exact rate travels in ``rate_hz``, which is
    what derivatives downstream use.
    """
    if not 0 < rate_hz <= 1000:
        raise InputError(f"rate must be in (0, 1000] Hz, got {rate_hz}")
    if len(s) < 2:
        raise TooFewFrames(2, len(s))
    if s.rate_hz == rate_hz:
        return s

    t = s.t_ms.astype(float)
    step = 1000.0 / rate_hz
    on_grid = t[0] + step * np.arange(len(t))
    if np.all(np.abs(t - on_grid) < 1.0):
        logger.debug("Kept %d on-grid frames at %.6g Hz", len(s), rate_hz)
        return s.model_copy(update={"rate_hz": rate_hz})

    n = int(np.floor((t[-1] - t[0]) / step + 1e-9)) + 1
    grid = t[0] + step * np.arange(n)
    if t[-1] - grid[-1] < 1.0:
        grid[-1] = t[-1]
    else:
        grid = np.append(grid, t[-1])

    idx = np.clip(np.searchsorted(t, grid, side="right") - 1, 0, len(t) - 2)
    w = (grid - t[idx]) / (t[idx + 1] - t[idx])
    w = np.clip(w, 0.0, 1.0)

    positions = (
        s.positions[idx] * (1.0 - w)[:, None, None] + s.positions[idx + 1] * w[:, None, None]
    )
    lo, hi = s.confidence[idx], s.confidence[idx + 1]
    confidence = np.minimum(lo, hi)
    confidence = np.where((w == 0.0)[:, None], lo, confidence)
    confidence = np.where((w == 1.0)[:, None], hi, confidence)

    t_out = np.floor(grid + 0.5).astype(np.int64)
    logger.debug("Resampled %d frames to %d at %.6g Hz", len(s), len(grid), rate_hz)
    return SessionStream(t_ms=t_out, positions=positions, confidence=confidence, rate_hz=rate_hz)


def smooth(s: SessionStream, window_frames: int = 5) -> SessionStream:
    """Centered moving average; edge frames use the widest symmetric window that fits."""
    if window_frames < 1 or window_frames % 2 == 0:
        raise InputError(f"smoothing window must be an odd positive integer, got {window_frames}")
    n = len(s)
    if window_frames > n:
        raise WindowTooLarge(window_frames, n)
    if window_frames == 1:
        return s

    half = window_frames // 2
    x = s.positions
    out = np.empty_like(x)

    windows = sliding_window_view(x, window_frames, axis=0)
    mean = windows.mean(axis=-1)
    out[half : n - half] = np.clip(mean, windows.min(axis=-1), windows.max(axis=-1))
    for i in (*range(half), *range(n - half, n)):
        h = min(i, n - 1 - i)
        chunk = x[i - h : i + h + 1]
        out[i] = np.clip(chunk.mean(axis=0), chunk.min(axis=0), chunk.max(axis=0))

    return s.model_copy(update={"positions": out})


def estimate_body_scale(s: SessionStream) -> BodyScale:
    """Median bone lengths over the stream plus a stature estimate."""
    if len(s) < 30:
        raise TooFewFrames(30, len(s))

    lengths: dict[str, float] = {}
    for parent, child in BONES:
        d = np.linalg.norm(s.positions[:, child] - s.positions[:, parent], axis=1)
        length = float(np.median(d))
        if length <= 1e-6:
            raise DegeneratePose(parent.name, child.name)
        lengths[child.name] = length

    for part in ("CLAVICLE", "SHOULDER", "ELBOW", "WRIST", "HIP", "KNEE", "ANKLE", "FOOT"):
        left, right = lengths[f"{part}_L"], lengths[f"{part}_R"]
        if abs(left - right) > 0.25 * max(left, right):
            logger.warning(
                "Bone ending at %s differs by more than 25%% between sides (%.3f m vs %.3f m)",
                part,
                left,
                right,
            )

    axial = sum(lengths[j] for j in ("SPINE_NAVEL", "SPINE_CHEST", "NECK", "HEAD"))
    legs = [lengths[f"KNEE_{side}"] + lengths[f"ANKLE_{side}"] for side in ("L", "R")]
    return BodyScale(lengths=lengths, stature=axial + float(np.mean(legs)))
