import logging
import pickle

import numpy as np
import pandas as pd
import pytest
from scipy import stats
from statsmodels.stats.anova import AnovaRM

from app import validation
from app.config import AppConfig
from app.errors import (
    DegeneratePose,
    InputError,
    MissingExercise,
    SchemaError,
    TrialError,
    UnbalancedDesign,
)
from app.models import GROUP_KEYS, ExerciseKind, ProtocolConfig, TrialResult
from app.muscle_model import load_model
from app.validation import (
    ANALYSIS_COLUMNS,
    analysis_columns,
    anova_table,
    boxplot_data,
    compute_statistics,
    effect_checks,
    eta_magnitude,
    holm,
    load_protocol,
    paired_t,
    relative_difference,
    repeatability,
    run_protocol,
    run_trial,
    subject_body,
    subject_means,
    trial_params,
    write_validation,
)

E = ExerciseKind


def trial(subject, exercise, measurement=0, **groups):
    values = dict.fromkeys(GROUP_KEYS, 0.0)
    values.update(groups)
    return TrialResult(subject=subject, exercise=exercise, measurement=measurement, groups=values)


def legs(left, right):
    return {"quadriceps_femoris_L": left, "quadriceps_femoris_R": right}


@pytest.fixture
def cohort():
    """Two subjects with hand-picked squat and lunge work."""
    arms = {"pectoralis_major_L": 10.0, "pectoralis_major_R": 10.0}
    arms |= {"triceps_brachii_L": 5.0, "triceps_brachii_R": 5.0}
    results = []
    for subject in (0, 1):
        extra = 10.0 * subject
        results += [
            trial(subject, E.SQUATS_ARMS, **legs(100 + extra, 100 + extra), **arms),
            trial(
                subject,
                E.SQUATS_NO_ARMS,
                **legs(100 + extra, 100 + extra),
                pectoralis_major_L=1.0,
                pectoralis_major_R=1.0,
            ),
            trial(subject, E.LUNGES, **legs(50 + extra, 100 + extra)),
        ]
    return results


@pytest.fixture
def config():
    return AppConfig()


def test_relative_difference():
    assert relative_difference(0.0, 0.0) == 0.0
    assert relative_difference(3.0, 4.0) == 0.25
    assert relative_difference(4.0, 3.0) == 0.25


@pytest.mark.parametrize(
    ("eta", "label"), [(0.2, "l"), (0.14, "l"), (0.1, "m"), (0.02, "s"), (0.001, "")]
)
def test_eta_magnitude(eta, label):
    assert eta_magnitude(eta) == label


def test_anova_table_known_values():
    y = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 3.0]])
    result = anova_table(y, "g")
    assert result.f_stat == pytest.approx(3.0)
    assert (result.df_num, result.df_den) == (1, 2)
    assert result.p_value == pytest.approx(1 - np.sqrt(3 / 5), rel=1e-9)
    assert result.eta_sq == pytest.approx(0.6)
    assert result.magnitude == "l"
    assert not result.unbounded


def test_anova_table_f_matches_reference_p():
    # Three conditions, ten subjects: F(2, 18) = 3.555 sits on the 5% boundary.
    rng = np.random.default_rng(0)
    base = rng.normal(size=(10, 1)) * 5
    noise = rng.normal(size=(10, 3))
    result = anova_table(base + noise, "g")
    assert result.df_num == 2
    assert result.df_den == 18
    assert result.p_value == pytest.approx(stats.f.sf(result.f_stat, 2, 18))
    assert stats.f.sf(3.555, 2, 18) == pytest.approx(0.05, abs=0.002)


def test_anova_table_matches_anova_rm():
    rng = np.random.default_rng(3)
    y = rng.normal(size=(6, 1)) + rng.normal(size=(6, 4)) + np.array([0.0, 0.5, 1.0, 0.2])
    long = pd.DataFrame(
        [(s, c, y[s, c]) for s in range(6) for c in range(4)],
        columns=["subject", "exercise", "work"],
    )
    oracle = AnovaRM(long, "work", "subject", within=["exercise"]).fit().anova_table.iloc[0]

    result = anova_table(y)
    assert result.f_stat == pytest.approx(oracle["F Value"], rel=1e-9)
    assert (result.df_num, result.df_den) == (oracle["Num DF"], oracle["Den DF"])
    assert result.p_value == pytest.approx(oracle["Pr > F"], rel=1e-6)


def test_anova_table_without_factor_effect():
    result = anova_table(np.array([[1.0, 1.0, 1.0], [2.0, 2.0, 2.0], [3.0, 3.0, 3.0]]))
    assert result.f_stat == 0.0
    assert result.p_value == 1.0
    assert result.magnitude == ""


def test_anova_table_without_error_is_unbounded():
    result = anova_table(np.array([[1.0, 2.0, 3.0], [2.0, 3.0, 4.0], [3.0, 4.0, 5.0]]))
    assert result.unbounded
    assert result.f_stat == float("inf")
    assert result.p_value == 0.0


def test_anova_table_needs_two_subjects():
    with pytest.raises(UnbalancedDesign):
        anova_table(np.array([[1.0, 2.0]]))


def test_paired_t():
    t, p = paired_t(np.array([1.0, 2.0, 3.0]), np.array([2.0, 4.0, 3.0]))
    assert t == pytest.approx(-np.sqrt(3.0))
    assert p == pytest.approx(1 - np.sqrt(3 / 5), rel=1e-9)
    assert paired_t(np.ones(3), np.ones(3)) == (0.0, 1.0)
    assert paired_t(np.ones(3), np.full(3, 2.0)) == (float("-inf"), 0.0)


def test_holm():
    assert holm([0.01, 0.02, 0.04]) == pytest.approx([0.03, 0.04, 0.04])
    assert holm([0.5, 0.01]) == pytest.approx([0.5, 0.02])


def test_analysis_columns_fold_gluteus_into_ischiocrurales():
    results = [trial(0, E.LUNGES, ischiocrurales_L=2.0, gluteus_maximus_L=3.0)]
    frame = analysis_columns(results)
    assert list(frame.columns[3:]) == list(ANALYSIS_COLUMNS)
    assert len(ANALYSIS_COLUMNS) == 14
    assert frame.loc[0, "l_ischi_glutm"] == 5.0
    assert frame.loc[0, "r_ischi_glutm"] == 0.0


def test_subject_means_averages_measurements():
    results = [
        trial(0, E.LUNGES, 0, **legs(1.0, 0.0)),
        trial(0, E.LUNGES, 1, **legs(3.0, 0.0)),
        trial(0, E.SQUATS_ARMS, 0, **legs(5.0, 0.0)),
        trial(0, E.SQUATS_ARMS, 1, **legs(5.0, 0.0)),
    ]
    table = subject_means(results, "l_quadriceps")
    assert list(table.columns) == ["lunges", "squats-arms"]
    assert table.loc[0, "lunges"] == 2.0
    assert subject_means(results, "quadriceps_femoris_L").loc[0, "squats-arms"] == 5.0


def test_subject_means_rejects_unknown_group(cohort):
    with pytest.raises(InputError):
        subject_means(cohort, "gastrocnemius")


def test_subject_means_rejects_unbalanced_design(cohort):
    with pytest.raises(UnbalancedDesign):
        subject_means(cohort[:-1], "l_quadriceps")


def test_effect_checks_pass(cohort, config):
    report = effect_checks(cohort, config)
    assert report.all_passed
    assert report.checks["arm_involvement"].value == pytest.approx(15.0)
    assert report.checks["leg_similarity"].value == 0.0
    assert report.checks["squat_symmetry"].value == 0.0
    expected = np.mean([0.5, 50 / 110])
    assert report.checks["lunge_asymmetry"].value == pytest.approx(expected)


def test_effect_checks_missing_exercise(cohort, config):
    report = effect_checks([r for r in cohort if r.exercise is not E.LUNGES], config)
    lunge = report.checks["lunge_asymmetry"]
    assert lunge.passed is None
    assert lunge.value is None
    assert "lunges" in lunge.detail
    assert report.checks["arm_involvement"].passed is True


def test_effect_checks_without_any_exercise(config):
    with pytest.raises(MissingExercise):
        effect_checks([trial(0, E.ARM_CIRCLES)], config)


def test_effect_checks_failure_is_logged(config, caplog):
    results = [trial(0, E.SQUATS_NO_ARMS, **legs(100.0, 80.0))]
    with caplog.at_level(logging.WARNING):
        report = effect_checks(results, config)
    assert report.checks["squat_symmetry"].passed is False
    assert report.checks["arm_involvement"].passed is None
    assert not report.all_passed
    assert "squat_symmetry" in caplog.text


def test_effect_checks_noise_relaxes_squat_threshold(config):
    results = [trial(0, E.SQUATS_NO_ARMS, **legs(100.0, 90.0))]
    assert effect_checks(results, config).checks["squat_symmetry"].passed is False
    noisy = effect_checks(results, config, noise_deg=2.0).checks["squat_symmetry"]
    assert noisy.threshold == config.SQUAT_SYMMETRY_MAX_NOISY
    assert noisy.passed is True


def test_arm_involvement_without_arm_work_in_plain_squats(config):
    results = [
        trial(0, E.SQUATS_ARMS, pectoralis_major_L=1.0),
        trial(0, E.SQUATS_NO_ARMS),
    ]
    assert effect_checks(results, config).checks["arm_involvement"].value == float("inf")


def test_boxplot_data(cohort):
    frame = boxplot_data(cohort)
    assert list(frame.columns) == ["exercise", "group", "min", "q1", "median", "q3", "max"]
    assert len(frame) == 3 * 14
    row = frame[(frame["exercise"] == "lunges") & (frame["group"] == "l_quadriceps")].iloc[0]
    assert (row["min"], row["median"], row["max"]) == (50.0, 55.0, 60.0)


def test_repeatability():
    results = [
        trial(0, E.LUNGES, 0, **legs(90.0, 1.0)),
        trial(0, E.LUNGES, 1, **legs(110.0, 1.0)),
    ]
    frame = repeatability(results).set_index("group")
    assert frame.loc["l_quadriceps", "mean"] == 100.0
    assert frame.loc["l_quadriceps", "cv"] == pytest.approx(np.sqrt(200.0) / 100.0)
    assert frame.loc["l_quadriceps", "relevant"]
    assert frame.loc["r_quadriceps", "cv"] == 0.0
    assert not frame.loc["r_quadriceps", "relevant"]
    assert frame.loc["l_biceps", "cv"] == 0.0


def test_compute_statistics(cohort, config):
    report = compute_statistics(cohort, config)
    assert report["alpha"] == 0.05
    assert len(report["anova"]) == 14
    assert len(report["pairwise"]) == 14 * 3
    assert report["effects"]["checks"]["arm_involvement"]["passed"] is True
    assert len(report["repeatability"]) == 3 * 14


def test_compute_statistics_single_subject(config, caplog):
    with caplog.at_level(logging.WARNING):
        report = compute_statistics([trial(0, E.ARM_CIRCLES)], config)
    assert report["anova"] == []
    assert report["effects"] is None


def test_write_validation(cohort, config, tmp_path):
    paths = write_validation(cohort, config, tmp_path / "out")
    assert set(paths) == {"trials", "stats", "boxplot"}
    header = paths["trials"].read_text().splitlines()[0].split(",")
    assert header == ["subject", "exercise", "measurement", *GROUP_KEYS]
    assert paths["stats"].read_text().endswith("\n")


def test_load_protocol_default():
    protocol = load_protocol()
    assert protocol.n_subjects == 10
    assert protocol.n_measurements == 5
    assert protocol.reps_per_measurement == 5
    assert protocol.exercises == list(ExerciseKind)


def test_load_protocol_invalid(tmp_path):
    path = tmp_path / "protocol.json"
    path.write_text('{"n_subjects": 0}')
    with pytest.raises(SchemaError):
        load_protocol(path)
    path.write_text("{")
    with pytest.raises(SchemaError):
        load_protocol(path)


def test_trial_params_seeding():
    c = ProtocolConfig(noise_deg=1.0, mirror_lunges="alternate")
    a, mass_a = trial_params(c, 1, E.LUNGES, 0)
    b, mass_b = trial_params(c, 1, E.SQUATS_ARMS, 0)
    again, _ = trial_params(c, 1, E.LUNGES, 0)
    assert a == again
    assert a.seed != b.seed
    assert a.seed != trial_params(c, 1, E.LUNGES, 1)[0].seed
    assert (a.stature, mass_a) == (b.stature, mass_b) == subject_body(c, 1)
    assert a.mirror
    assert not trial_params(c, 2, E.LUNGES, 0)[0].mirror


def test_subject_body_within_ranges():
    c = ProtocolConfig()
    for subject in range(20):
        stature, mass = subject_body(c, subject)
        assert 0.9 <= stature <= 1.1
        assert 55.0 <= mass <= 95.0


def test_run_protocol_is_deterministic(config):
    model = load_model()
    c = ProtocolConfig(
        n_subjects=1,
        exercises=[E.SQUATS_NO_ARMS],
        n_measurements=2,
        reps_per_measurement=1,
        noise_deg=1.0,
    )
    first = run_protocol(c, model, config)
    assert [(r.subject, r.measurement) for r in first] == [(0, 0), (0, 1)]
    assert first == run_protocol(c, model, config)
    assert first[0].groups != first[1].groups


def test_run_protocol_rejects_bad_jobs(config):
    with pytest.raises(InputError):
        run_protocol(ProtocolConfig(), load_model(), config, jobs=0)


def test_run_trial_wraps_failures(config, monkeypatch):
    def fail(*args, **kwargs):
        raise DegeneratePose("HIP_L", "KNEE_L")

    monkeypatch.setattr(validation, "generate", fail)
    with pytest.raises(TrialError) as info:
        run_trial(ProtocolConfig(), load_model(), config, 3, E.LUNGES, 4)
    error = info.value
    assert (error.subject, error.exercise, error.measurement) == (3, "lunges", 4)
    assert isinstance(error.cause, DegeneratePose)

    restored = pickle.loads(pickle.dumps(error))
    assert str(restored) == str(error)
    assert restored.measurement == 4
