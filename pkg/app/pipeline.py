"""End-to-end analysis of one skeleton session: stream → angles → torques → forces → work."""

import logging
from dataclasses import dataclass

import numpy as np

from app.aggregation import SessionStreams, accumulate_session, build_streams
from app.config import AppConfig
from app.kinematics import AngleStream, angle_stream, load_segment_model, torque_stream
from app.models import BodyScale, SegmentModel, SessionStream, SessionSummary
from app.muscle_model import MuscleGeometry, MuscleStates, MusculoskeletalModel
from app.skeleton_io import estimate_body_scale, resample, smooth
from app.solver import ForceStream, distribute_stream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SessionAnalysis:
    session: SessionStream
    scale: BodyScale
    angles: AngleStream
    torques: np.ndarray
    states: MuscleStates
    forces: ForceStream
    streams: SessionStreams
    summary: SessionSummary


def prepare_stream(session: SessionStream, config: AppConfig) -> SessionStream:
    """Resample to the configured rate and smooth; short streams get a narrower window."""
    uniform = resample(session, config.RATE_HZ)
    window = min(config.SMOOTH_WINDOW, len(uniform) - (1 - len(uniform) % 2))
    if window != config.SMOOTH_WINDOW:
        logger.info("Stream has %d frames; smoothing window reduced to %d", len(uniform), window)
    return smooth(uniform, max(window, 1))


def analyze_session(
    session: SessionStream,
    model: MusculoskeletalModel,
    config: AppConfig,
    *,
    mass_kg: float | None = None,
    scale: BodyScale | None = None,
    segments: SegmentModel | None = None,
    window_frames: int | None = None,
) -> SessionAnalysis:
    """
    Run the full muscle-work pipeline on one session.

    Args:
        session: Raw skeleton stream, any frame spacing.
        model: Loaded musculoskeletal model.
        config: Engine configuration (rate, smoothing, solver, display settings).
        mass_kg: Body mass; the configured default is used with a warning when None.
        scale: Known body scale; estimated from the stream when None.
        segments: Anthropometric table; the bundled one when None.
        window_frames: Display window override.

    Returns:
        Every intermediate stream plus the accumulated SessionSummary.
    """
    if mass_kg is None:
        logger.warning("No body mass given; using %.1f kg", config.DEFAULT_MASS_KG)
        mass_kg = config.DEFAULT_MASS_KG
    segments = segments or load_segment_model()

    prepared = prepare_stream(session, config)
    scale = scale or estimate_body_scale(prepared)
    angles = angle_stream(prepared)
    torques = torque_stream(angles.angles, angles.accelerations, mass_kg, scale, segments)
    states = MuscleGeometry(model, scale).states(angles)
    forces = distribute_stream(
        torques,
        states,
        model,
        penalty_weight=config.PENALTY_WEIGHT,
        max_iterations=config.MAX_ITERATIONS,
        method=config.SOLVER_METHOD,
    )
    dt_s = 1.0 / angles.rate_hz
    streams = build_streams(
        angles.t_ms,
        forces.work(dt_s),
        model,
        dt_s,
        window_frames=window_frames or config.WINDOW_FRAMES,
        mode=config.WINDOW_MODE,
        normalization=config.NORMALIZATION,
        fixed_scale=config.FIXED_SCALE,
        anchors=config.COLOR_ANCHORS,
        infeasible=forces.infeasible,
        skipped_dofs=forces.skipped_dofs,
    )
    summary = accumulate_session(streams)
    logger.info(
        "Analyzed %d frames (%.1f s): overall work %.6g N·s, %d infeasible frames",
        summary.frame_count,
        summary.duration_s,
        summary.overall,
        summary.infeasible_frames,
    )
    return SessionAnalysis(
        session=prepared,
        scale=scale,
        angles=angles,
        torques=torques,
        states=states,
        forces=forces,
        streams=streams,
        summary=summary,
    )
