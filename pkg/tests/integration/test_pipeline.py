import numpy as np
import pytest

from app.config import AppConfig
from app.models import ExerciseKind, ProtocolConfig
from app.muscle_model import load_model
from app.pipeline import analyze_session, prepare_stream
from app.synth import MotionParams, generate
from app.validation import effect_checks, relative_difference, repeatability, run_protocol


@pytest.fixture(scope="module")
def model():
    return load_model()


@pytest.fixture(scope="module")
def config():
    return AppConfig()


def analyze(kind, model, config, **params):
    return analyze_session(generate(kind, MotionParams(**params)), model, config, mass_kg=70.0)


def test_prepare_stream_narrows_window_for_short_streams(config):
    session = generate(ExerciseKind.LUNGES, MotionParams(reps=1, cadence_hz=20.0))
    assert len(session) == 3
    assert len(prepare_stream(session, config)) == 3


def test_squat_is_symmetric_and_decomposes(model, config):
    result = analyze(ExerciseKind.SQUATS_NO_ARMS, model, config, reps=2)
    summary = result.summary

    assert summary.frame_count == 240
    assert summary.overall > 0
    assert summary.overall == pytest.approx(sum(summary.groups.values()), rel=1e-9)
    assert summary.overall == pytest.approx(sum(summary.muscles.values()), rel=1e-9)
    for group in ("quadriceps_femoris", "gluteus_maximus", "ischiocrurales"):
        left, right = summary.groups[f"{group}_L"], summary.groups[f"{group}_R"]
        assert left == pytest.approx(right, rel=0.05)
    assert summary.limbs["left_lower"] > summary.limbs["left_upper"]


def test_work_is_nonnegative_and_display_is_normalized(model, config):
    result = analyze(ExerciseKind.ARM_CIRCLES, model, config, reps=2)
    streams = result.streams

    assert np.all(streams.muscles >= 0)
    assert np.all((streams.display.normalized >= 0) & (streams.display.normalized <= 1))
    assert streams.display.normalized.max() == pytest.approx(1.0)
    assert result.summary.limbs["left_upper"] > result.summary.limbs["left_lower"]


def test_lunge_is_asymmetric_and_mirrors(model, config):
    plain = analyze(ExerciseKind.LUNGES, model, config, reps=2).summary.groups
    mirrored = analyze(ExerciseKind.LUNGES, model, config, reps=2, mirror=True).summary.groups

    left, right = plain["quadriceps_femoris_L"], plain["quadriceps_femoris_R"]
    assert relative_difference(left, right) >= 0.3
    assert mirrored["quadriceps_femoris_L"] == pytest.approx(right, rel=0.05)
    assert mirrored["quadriceps_femoris_R"] == pytest.approx(left, rel=0.05)


def test_small_cohort_shows_the_expected_effects(model, config):
    protocol = ProtocolConfig(
        n_subjects=2,
        exercises=[ExerciseKind.LUNGES, ExerciseKind.SQUATS_ARMS, ExerciseKind.SQUATS_NO_ARMS],
        n_measurements=1,
        reps_per_measurement=2,
    )
    results = run_protocol(protocol, model, config)
    assert len(results) == 6

    report = effect_checks(results, config)
    assert report.checks["arm_involvement"].passed is True
    assert report.checks["squat_symmetry"].passed is True
    assert report.checks["lunge_asymmetry"].passed is True
    assert report.checks["leg_similarity"].passed is True


@pytest.mark.parametrize("kind", list(ExerciseKind))
@pytest.mark.parametrize(("mass", "stature"), [(55.0, 0.9), (95.0, 1.1)])
def test_protocol_exercises_are_feasible_across_body_sizes(model, config, kind, mass, stature):
    params = MotionParams(reps=1, stature=stature)
    summary = analyze_session(
        generate(kind, params), model, config, mass_kg=mass, scale=params.body()
    ).summary

    assert summary.infeasible_frames / summary.frame_count <= 0.02


def test_work_repeats_across_noisy_measurements(model, config):
    protocol = ProtocolConfig(
        n_subjects=2,
        exercises=[ExerciseKind.SQUATS_NO_ARMS, ExerciseKind.LUNGES],
        n_measurements=3,
        reps_per_measurement=2,
        noise_deg=1.0,
        seed=11,
    )
    table = repeatability(run_protocol(protocol, model, config), relevance=0.05)
    relevant = table[table["relevant"]]

    assert not relevant.empty
    assert (relevant["cv"] <= 0.10).all(), relevant[relevant["cv"] > 0.10]
