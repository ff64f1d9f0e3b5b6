"""
Muscle work grouped into the 16 group signals, the four limbs and the overall value.

Also derives the windowed display values behind the avatar heatmap, the session summary and the
exported artifacts (summary JSON, per-frame CSV, heatmap JSON, limb bar chart SVG).
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from app.errors import InputError
from app.models import (
    GROUP_KEYS,
    LIMBS,
    LOWER_LIMB_GROUPS,
    UPPER_LIMB_GROUPS,
    ArrayModel,
    SessionSummary,
    Side,
    group_key,
)
from app.muscle_model import MusculoskeletalModel
from app.serialization import write_csv, write_json
from app.solver import WorkIncrementFrame

logger = logging.getLogger(__name__)

RGB = tuple[int, int, int]
WindowMode = Literal["increments", "cumulative"]
Normalization = Literal["running-max", "fixed"]

COLOR_ANCHORS: tuple[RGB, RGB, RGB] = ((64, 224, 208), (0, 128, 0), (255, 0, 0))
LIMB_COLUMNS = (*LIMBS, "overall")
LIMB_COLORS = {
    "left_upper": "#1f4fd8",
    "right_upper": "#2e9d3a",
    "left_lower": "#f2c300",
    "right_lower": "#d62828",
    "overall": "#ffffff",
}

# Group indices of each limb, in summation order.
_LIMB_GROUPS: dict[str, tuple[int, ...]] = {
    f"{'left' if side is Side.L else 'right'}_{part}": tuple(
        GROUP_KEYS.index(group_key(g, side)) for g in groups
    )
    for part, groups in (("upper", UPPER_LIMB_GROUPS), ("lower", LOWER_LIMB_GROUPS))
    for side in Side
}


class GroupWorkFrame(ArrayModel):
    """Work per (group, side) in GROUP_KEYS order, N·s."""

    t_ms: int
    values: np.ndarray

    def as_dict(self) -> dict[str, float]:
        return {k: float(v) for k, v in zip(GROUP_KEYS, self.values, strict=True)}


class LimbWorkFrame(ArrayModel):
    t_ms: int
    left_upper: float
    right_upper: float
    left_lower: float
    right_lower: float
    overall: float


class DisplayFrame(ArrayModel):
    t_ms: int
    window_median: dict[str, float]
    normalized: dict[str, float]
    rgb: dict[str, RGB]


def group_members(model: MusculoskeletalModel) -> list[list[int]]:
    """Muscle indices of every group signal, in GROUP_KEYS order."""
    members: list[list[int]] = [[] for _ in GROUP_KEYS]
    for i, m in enumerate(model.muscles):
        members[GROUP_KEYS.index(group_key(m.group, m.side))].append(i)
    return members


def _sum_columns(values: np.ndarray, columns) -> np.ndarray:
    total = np.zeros(values.shape[:-1])
    for c in columns:
        total = total + values[..., c]
    return total


def group_work(work: np.ndarray, model: MusculoskeletalModel) -> np.ndarray:
    """Per-muscle work (..., muscles) to group work (..., 16) by plain summation."""
    return np.stack([_sum_columns(work, idx) for idx in group_members(model)], axis=-1)


def limb_work(groups: np.ndarray) -> np.ndarray:
    """Group work (..., 16) to (..., 5): the four limbs in LIMBS order, then overall."""
    limbs = [_sum_columns(groups, _LIMB_GROUPS[name]) for name in LIMBS]
    return np.stack([*limbs, _sum_columns(np.stack(limbs, axis=-1), range(len(LIMBS)))], axis=-1)


def group_frame(w: WorkIncrementFrame, model: MusculoskeletalModel) -> GroupWorkFrame:
    return GroupWorkFrame(t_ms=w.t_ms, values=group_work(np.asarray(w.increments), model))


def limb_frame(g: GroupWorkFrame) -> LimbWorkFrame:
    values = limb_work(g.values)
    limbs = {k: float(v) for k, v in zip(LIMB_COLUMNS, values, strict=True)}
    return LimbWorkFrame(t_ms=g.t_ms, **limbs)


def color_map(normalized, anchors: tuple[RGB, RGB, RGB] = COLOR_ANCHORS):
    """
    Piecewise-linear turquoise → green → red gradient.

    Args:
        normalized: Scalar or array; clamped to [0, 1].
        anchors: Colors at 0.0, 0.5 and 1.0.

    Returns:
        An (r, g, b) tuple of ints for a scalar input, otherwise an int array (..., 3).
    """
    x = np.clip(np.asarray(normalized, dtype=float), 0.0, 1.0)
    low, mid, high = (np.asarray(a, dtype=float) for a in anchors)
    t = np.where(x <= 0.5, x / 0.5, (x - 0.5) / 0.5)[..., None]
    lower = np.where((x <= 0.5)[..., None], low, mid)
    upper = np.where((x <= 0.5)[..., None], mid, high)
    rgb = np.floor(lower + t * (upper - lower) + 0.5).astype(int)
    if rgb.ndim == 1:
        return tuple(int(c) for c in rgb)
    return rgb


def window_medians(values: np.ndarray, window_frames: int) -> np.ndarray:
    """Median of the trailing min(window, available) rows for every row."""
    if window_frames < 1:
        raise InputError(f"window must be at least 1 frame, got {window_frames}")
    n = len(values)
    out = np.empty_like(values, dtype=float)
    head = min(window_frames - 1, n)
    for i in range(head):
        out[i] = np.median(values[: i + 1], axis=0)
    if n >= window_frames:
        windows = sliding_window_view(values, window_frames, axis=0)
        out[window_frames - 1 :] = np.median(windows, axis=-1)
    return out


@dataclass(frozen=True)
class DisplayStream:
    t_ms: np.ndarray
    window_median: np.ndarray
    normalized: np.ndarray
    rgb: np.ndarray

    def __len__(self) -> int:
        return len(self.t_ms)

    def frame(self, i: int) -> DisplayFrame:
        return DisplayFrame(
            t_ms=int(self.t_ms[i]),
            window_median=dict(zip(GROUP_KEYS, map(float, self.window_median[i]), strict=True)),
            normalized=dict(zip(GROUP_KEYS, map(float, self.normalized[i]), strict=True)),
            rgb={k: tuple(int(c) for c in v) for k, v in zip(GROUP_KEYS, self.rgb[i], strict=True)},
        )


def window_display(
    t_ms: np.ndarray,
    groups: np.ndarray,
    window_frames: int = 60,
    *,
    mode: WindowMode = "increments",
    normalization: Normalization = "running-max",
    fixed_scale: float = 1.0,
    anchors: tuple[RGB, RGB, RGB] = COLOR_ANCHORS,
) -> DisplayStream:
    """
    Windowed median, normalized value and heatmap color of every group for every frame.

    The running maximum only ever grows, so a frame's normalized value depends on the frames up
    to and including it.
    """
    values = np.cumsum(groups, axis=0) if mode == "cumulative" else np.asarray(groups)
    medians = window_medians(values, window_frames)
    if normalization == "fixed":
        normalized = np.clip(medians / fixed_scale, 0.0, 1.0)
    else:
        running_max = np.maximum.accumulate(medians.max(axis=1, initial=0.0))
        denominator = np.where(running_max > 0, running_max, 1.0)[:, None]
        normalized = np.where(running_max[:, None] > 0, medians / denominator, 0.0)
    return DisplayStream(
        t_ms=np.asarray(t_ms),
        window_median=medians,
        normalized=normalized,
        rgb=color_map(normalized, anchors).reshape(*normalized.shape, 3),
    )


@dataclass(frozen=True)
class SessionStreams:
    """Aligned per-frame work streams of one analyzed session."""

    t_ms: np.ndarray
    dt_s: float
    names: list[str]
    muscles: np.ndarray
    groups: np.ndarray
    limbs: np.ndarray
    display: DisplayStream
    infeasible: np.ndarray
    skipped_dofs: list[str]

    def __len__(self) -> int:
        return len(self.t_ms)


def build_streams(
    t_ms: np.ndarray,
    work: np.ndarray,
    model: MusculoskeletalModel,
    dt_s: float,
    *,
    window_frames: int = 60,
    mode: WindowMode = "increments",
    normalization: Normalization = "running-max",
    fixed_scale: float = 1.0,
    anchors: tuple[RGB, RGB, RGB] = COLOR_ANCHORS,
    infeasible: np.ndarray | None = None,
    skipped_dofs: list[str] | None = None,
) -> SessionStreams:
    groups = group_work(work, model)
    return SessionStreams(
        t_ms=np.asarray(t_ms),
        dt_s=dt_s,
        names=model.names,
        muscles=work,
        groups=groups,
        limbs=limb_work(groups),
        display=window_display(
            t_ms,
            groups,
            window_frames,
            mode=mode,
            normalization=normalization,
            fixed_scale=fixed_scale,
            anchors=anchors,
        ),
        infeasible=np.zeros(len(t_ms), dtype=bool) if infeasible is None else infeasible,
        skipped_dofs=list(skipped_dofs or []),
    )


def group_shares(summary: SessionSummary) -> dict[str, float]:
    """Each group's and limb's fraction of the overall session work."""
    keys = [*summary.groups, *summary.limbs]
    if summary.overall <= 0:
        return dict.fromkeys(keys, 0.0)
    return {
        **{k: v / summary.overall for k, v in summary.groups.items()},
        **{k: v / summary.overall for k, v in summary.limbs.items()},
    }


def limb_distribution(limbs: np.ndarray) -> dict[str, list[float]]:
    """Min, quartiles and max of the per-frame increments of each limb and overall."""
    if len(limbs) == 0:
        return {k: [0.0] * 5 for k in LIMB_COLUMNS}
    q = np.quantile(limbs, [0.0, 0.25, 0.5, 0.75, 1.0], axis=0)
    return {k: [float(v) for v in q[:, i]] for i, k in enumerate(LIMB_COLUMNS)}


def accumulate_session(streams: SessionStreams) -> SessionSummary:
    """Totals over the whole session; the peak window is the largest windowed median per group."""
    n = len(streams)
    muscles = streams.muscles.sum(axis=0) if n else np.zeros(len(streams.names))
    groups = streams.groups.sum(axis=0) if n else np.zeros(len(GROUP_KEYS))
    limbs = limb_work(groups)
    peaks = streams.display.window_median.max(axis=0) if n else np.zeros(len(GROUP_KEYS))
    summary = SessionSummary(
        duration_s=n * streams.dt_s,
        frame_count=n,
        infeasible_frames=int(np.count_nonzero(streams.infeasible)),
        skipped_dofs=streams.skipped_dofs,
        muscles={k: float(v) for k, v in zip(streams.names, muscles, strict=True)},
        groups={k: float(v) for k, v in zip(GROUP_KEYS, groups, strict=True)},
        limbs={k: float(v) for k, v in zip(LIMBS, limbs[:4], strict=True)},
        overall=float(limbs[4]),
        peak_window={k: float(v) for k, v in zip(GROUP_KEYS, peaks, strict=True)},
        limb_distribution=limb_distribution(streams.limbs),
    )
    return summary.model_copy(update={"shares": group_shares(summary)})


def top_groups(summary: SessionSummary, k: int = 3) -> list[tuple[str, float]]:
    return sorted(summary.groups.items(), key=lambda kv: (-kv[1], kv[0]))[:k]


def write_summary_json(summary: SessionSummary, path: str | Path) -> Path:
    return write_json(summary.model_dump(mode="json"), path)


def write_groups_csv(streams: SessionStreams, path: str | Path) -> Path:
    frame = pd.DataFrame(
        np.column_stack([streams.groups, streams.limbs]) if len(streams) else None,
        columns=[*GROUP_KEYS, *LIMB_COLUMNS],
    )
    frame.insert(0, "t_ms", np.asarray(streams.t_ms, dtype=np.int64))
    return write_csv(frame, path)


def heatmap(streams: SessionStreams, summary: SessionSummary, anchors=COLOR_ANCHORS) -> dict:
    """Final-frame display values plus session-level colors from the accumulated totals."""
    peak = max(summary.groups.values(), default=0.0)
    session = {}
    for k, v in summary.groups.items():
        normalized = v / peak if peak > 0 else 0.0
        rgb = list(color_map(normalized, anchors))
        session[k] = {"work": v, "normalized": normalized, "rgb": rgb}
    last = {}
    if len(streams):
        frame = streams.display.frame(len(streams) - 1)
        last = {
            k: {
                "window_median": frame.window_median[k],
                "normalized": frame.normalized[k],
                "rgb": list(frame.rgb[k]),
            }
            for k in GROUP_KEYS
        }
    return {"session": session, "last_window": last}


def write_heatmap_json(
    streams: SessionStreams, summary: SessionSummary, path: str | Path, anchors=COLOR_ANCHORS
) -> Path:
    return write_json(heatmap(streams, summary, anchors), path)


def limbs_svg(summary: SessionSummary) -> str:
    """Bar chart of the accumulated limb and overall work on a fixed 800×400 canvas."""
    width, height = 800, 400
    left, right, top, bottom = 70, 20, 40, 60
    plot_w, plot_h = width - left - right, height - top - bottom
    values = {**summary.limbs, "overall": summary.overall}
    peak = max(values.values(), default=0.0)
    slot = plot_w / len(LIMB_COLUMNS)
    bar_w = slot * 0.6

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#202830"/>',
        f'<text x="{width / 2:g}" y="24" fill="#ffffff" font-family="sans-serif" '
        'font-size="16" text-anchor="middle">Muscle work per limb (N·s)</text>',
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" y2="{top + plot_h}" '
        'stroke="#c0c0c0"/>',
    ]
    for i, name in enumerate(LIMB_COLUMNS):
        value = values.get(name, 0.0)
        bar_h = plot_h * value / peak if peak > 0 else 0.0
        x = left + i * slot + (slot - bar_w) / 2
        y = top + plot_h - bar_h
        cx = x + bar_w / 2
        parts += [
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w:.2f}" height="{bar_h:.2f}" '
            f'fill="{LIMB_COLORS[name]}" stroke="#c0c0c0"/>',
            f'<text x="{cx:.2f}" y="{y - 6:.2f}" fill="#ffffff" font-family="sans-serif" '
            f'font-size="12" text-anchor="middle">{value:.6g}</text>',
            f'<text x="{cx:.2f}" y="{top + plot_h + 20}" fill="#ffffff" font-family="sans-serif" '
            f'font-size="12" text-anchor="middle">{name.replace("_", " ")}</text>',
        ]
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_limbs_svg(summary: SessionSummary, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(limbs_svg(summary), encoding="utf-8")
    return path
