"""
Technical-validation protocol on synthetic cohorts and its statistics.

Every (subject, exercise, measurement) trial generates a synthetic session, runs the full
pipeline and records the accumulated group work. Statistics run on subject means over the
measurements: one-way repeated-measures ANOVA per group, Holm-adjusted paired t-tests per
exercise pair, and the named effect checks.
"""

import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import ValidationError
from scipy import stats
from statsmodels.stats.multitest import multipletests

from app.config import AppConfig
from app.errors import (
    InputError,
    MissingExercise,
    MuscleWorkError,
    SchemaError,
    TrialError,
    UnbalancedDesign,
)
from app.models import (
    GROUP_KEYS,
    AnovaResult,
    EffectCheck,
    EffectReport,
    ExerciseKind,
    MuscleGroup,
    PairwiseResult,
    ProtocolConfig,
    Side,
    TrialResult,
    group_key,
)
from app.muscle_model import MusculoskeletalModel
from app.pipeline import analyze_session
from app.serialization import write_csv, write_json
from app.synth import MotionParams, generate

logger = logging.getLogger(__name__)

G = MuscleGroup

# The seven per-side signals of the analysis tables; gluteus is folded into ischiocrurales.
ANALYSIS_SIGNALS: dict[str, tuple[MuscleGroup, ...]] = {
    "quadriceps": (G.QUADRICEPS_FEMORIS,),
    "ischi_glutm": (G.ISCHIOCRURALES, G.GLUTEUS_MAXIMUS),
    "latissimus": (G.LATISSIMUS_DORSI,),
    "deltoideus": (G.DELTOIDEUS,),
    "biceps": (G.BICEPS_BRACHII_BRACHIALIS,),
    "triceps": (G.TRICEPS_BRACHII,),
    "pectoralis": (G.PECTORALIS_MAJOR,),
}
ANALYSIS_COLUMNS = tuple(
    f"{side.value.lower()}_{name}" for side in Side for name in ANALYSIS_SIGNALS
)
ETA_MAGNITUDES = ((0.14, "l"), (0.06, "m"), (0.01, "s"))
QUARTILES = ("min", "q1", "median", "q3", "max")
SQUATS = (ExerciseKind.SQUATS_ARMS, ExerciseKind.SQUATS_NO_ARMS)


def load_protocol(path: str | Path | None = None) -> ProtocolConfig:
    """Load a protocol file; the bundled 10 × 5 × 5 protocol when no path is given."""
    if path is None:
        text = resources.files("app.data").joinpath("default_protocol.json").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    try:
        return ProtocolConfig.model_validate(json.loads(text))
    except (json.JSONDecodeError, ValidationError) as e:
        raise SchemaError(f"protocol {path or 'default_protocol.json'}: {e}") from e


def relative_difference(left: float, right: float) -> float:
    """|l − r| / max(l, r), zero when both are zero."""
    top = max(left, right)
    return 0.0 if top == 0 else abs(left - right) / top


def _ratio(numerator: float, denominator: float) -> float:
    if denominator == 0:
        return float("inf") if numerator > 0 else 0.0
    return numerator / denominator


def _seed(entropy: int, *key: int) -> int:
    sequence = np.random.SeedSequence(entropy, spawn_key=key)
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def subject_body(c: ProtocolConfig, subject: int) -> tuple[float, float]:
    """Stature multiplier and mass of a subject, drawn once per subject."""
    rng = np.random.default_rng(np.random.SeedSequence(c.seed, spawn_key=(subject,)))
    stature = float(rng.uniform(*c.stature_range))
    mass = float(rng.uniform(*c.mass_range))
    return stature, mass


def trial_params(c: ProtocolConfig, subject: int, exercise: ExerciseKind, measurement: int):
    stature, mass = subject_body(c, subject)
    exercise_index = list(ExerciseKind).index(exercise)
    params = MotionParams(
        reps=c.reps_per_measurement,
        cadence_hz=c.cadence_hz,
        noise_deg=c.noise_deg,
        seed=_seed(c.seed, subject, exercise_index, measurement),
        stature=stature,
        mirror=c.mirror_lunges == "alternate" and subject % 2 == 1,
    )
    return params, mass


def run_trial(
    c: ProtocolConfig,
    model: MusculoskeletalModel,
    config: AppConfig,
    subject: int,
    exercise: ExerciseKind,
    measurement: int,
) -> TrialResult:
    params, mass = trial_params(c, subject, exercise, measurement)
    try:
        session = generate(exercise, params)
        summary = analyze_session(
            session, model, config, mass_kg=mass, scale=params.body()
        ).summary
    except MuscleWorkError as e:
        raise TrialError(subject, exercise.value, measurement, e) from e
    return TrialResult(
        subject=subject, exercise=exercise, measurement=measurement, groups=summary.groups
    )


def _run_trial_star(args) -> TrialResult:
    return run_trial(*args)


def run_protocol(
    c: ProtocolConfig, model: MusculoskeletalModel, config: AppConfig, jobs: int = 1
) -> list[TrialResult]:
    """
    Run every trial of the protocol.

    Args:
        c: The protocol.
        model: Loaded musculoskeletal model.
        config: Engine configuration used by every trial.
        jobs: Worker processes; 1 runs in-process.

    Returns:
        Trial results ordered by (subject, exercise, measurement).

    Raises:
        TrialError: A trial failed; carries its coordinates and the cause.
    """
    if jobs < 1:
        raise InputError(f"jobs must be at least 1, got {jobs}")
    trials = [
        (c, model, config, subject, exercise, measurement)
        for subject in range(c.n_subjects)
        for exercise in c.exercises
        for measurement in range(c.n_measurements)
    ]
    logger.info("Running %d trials on %d worker(s)", len(trials), jobs)
    if jobs == 1:
        results = [_run_trial_star(t) for t in trials]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_trial_star, trials))
    order = {e: i for i, e in enumerate(ExerciseKind)}
    return sorted(results, key=lambda r: (r.subject, order[r.exercise], r.measurement))


def trials_frame(results: list[TrialResult]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "subject": r.subject,
                "exercise": r.exercise.value,
                "measurement": r.measurement,
                **{k: r.groups[k] for k in GROUP_KEYS},
            }
            for r in results
        ],
        columns=["subject", "exercise", "measurement", *GROUP_KEYS],
    )


def analysis_columns(results: list[TrialResult]) -> pd.DataFrame:
    """The 14 per-side analysis signals of every trial."""
    trials = trials_frame(results)
    out = trials[["subject", "exercise", "measurement"]].copy()
    for side in Side:
        for name, groups in ANALYSIS_SIGNALS.items():
            total = trials[group_key(groups[0], side)].copy()
            for g in groups[1:]:
                total = total + trials[group_key(g, side)]
            out[f"{side.value.lower()}_{name}"] = total
    return out


def _column(frame: pd.DataFrame, group: str) -> pd.Series:
    if group not in frame.columns:
        raise InputError(f"unknown group {group!r}")
    return frame[group]


def subject_means(results: list[TrialResult], group: str) -> pd.DataFrame:
    """Subject × exercise table of the group's mean work over measurements."""
    frame = analysis_columns(results).join(trials_frame(results)[list(GROUP_KEYS)])
    values = _column(frame, group)
    counts = frame.groupby(["subject", "exercise"]).size().unstack()
    if counts.isna().any().any() or counts.stack().nunique() > 1:
        raise UnbalancedDesign(
            f"every subject needs the same number of trials of every exercise ({group})"
        )
    table = frame.assign(value=values).pivot_table(
        index="subject", columns="exercise", values="value", aggfunc="mean"
    )
    order = [e.value for e in ExerciseKind if e.value in table.columns]
    return table[order]


def eta_magnitude(eta_sq: float) -> str:
    for threshold, label in ETA_MAGNITUDES:
        if eta_sq >= threshold:
            return label
    return ""


def rm_anova(results: list[TrialResult], group: str) -> AnovaResult:
    """
    One-way repeated-measures ANOVA with exercise as the within-subject factor.

    Raises:
        UnbalancedDesign: Missing cells, or fewer than two subjects or exercises.
    """
    table = subject_means(results, group)
    return anova_table(table.to_numpy(dtype=float), group)


def anova_table(y: np.ndarray, group: str = "") -> AnovaResult:
    """The ANOVA on a subjects × conditions matrix."""
    n, k = y.shape
    if n < 2 or k < 2:
        raise UnbalancedDesign(f"need at least 2 subjects and 2 exercises, got {n} and {k}")
    grand = y.mean()
    ss_factor = n * float(np.sum((y.mean(axis=0) - grand) ** 2))
    ss_subject = k * float(np.sum((y.mean(axis=1) - grand) ** 2))
    ss_total = float(np.sum((y - grand) ** 2))
    ss_error = max(ss_total - ss_factor - ss_subject, 0.0)
    df_num, df_den = k - 1, (k - 1) * (n - 1)

    scale = max(ss_total, np.finfo(float).tiny)
    if ss_factor <= 1e-12 * scale:
        return AnovaResult(
            group=group,
            f_stat=0.0,
            df_num=df_num,
            df_den=df_den,
            p_value=1.0,
            eta_sq=0.0,
            magnitude="",
        )
    if ss_error <= 1e-12 * scale:
        return AnovaResult(
            group=group,
            f_stat=float("inf"),
            df_num=df_num,
            df_den=df_den,
            p_value=0.0,
            eta_sq=1.0,
            magnitude="l",
            unbounded=True,
        )
    f_stat = (ss_factor / df_num) / (ss_error / df_den)
    eta_sq = ss_factor / (ss_factor + ss_error)
    return AnovaResult(
        group=group,
        f_stat=f_stat,
        df_num=df_num,
        df_den=df_den,
        p_value=float(stats.f.sf(f_stat, df_num, df_den)),
        eta_sq=eta_sq,
        magnitude=eta_magnitude(eta_sq),
    )


def paired_t(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Paired t statistic and two-sided p; identical columns give (0, 1)."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if np.all(d == 0):
        return 0.0, 1.0
    if np.all(d == d[0]):
        return float(np.copysign(np.inf, d[0])), 0.0
    result = stats.ttest_rel(a, b)
    return float(result.statistic), float(result.pvalue)


def pairwise_tests(results: list[TrialResult], group: str) -> list[PairwiseResult]:
    """Holm-adjusted paired t-tests on subject means for every exercise pair."""
    table = subject_means(results, group)
    pairs = list(itertools.combinations(table.columns, 2))
    if not pairs:
        return []
    tests = [paired_t(table[a].to_numpy(), table[b].to_numpy()) for a, b in pairs]
    p_raw = [p for _, p in tests]
    p_adjusted = holm(p_raw)
    return [
        PairwiseResult(
            group=group,
            exercise_a=ExerciseKind(a),
            exercise_b=ExerciseKind(b),
            t_stat=t,
            p_raw=p,
            p_adjusted=adj,
        )
        for (a, b), (t, p), adj in zip(pairs, tests, p_adjusted, strict=True)
    ]


def holm(p_values: list[float]) -> list[float]:
    """Holm step-down adjustment."""
    _, adjusted, _, _ = multipletests(p_values, method="holm")
    return [float(p) for p in adjusted]


def _require(frame: pd.DataFrame, exercise: ExerciseKind) -> pd.DataFrame:
    subset = frame[frame["exercise"] == exercise.value]
    if subset.empty:
        raise MissingExercise(exercise.value)
    return subset


def _quadriceps_asymmetry(frame: pd.DataFrame) -> float:
    """Mean over subjects of the per-subject l/r quadriceps relative difference."""
    per_subject = frame.groupby("subject")[["l_quadriceps", "r_quadriceps"]].mean()
    return float(
        np.mean([relative_difference(l, r) for l, r in per_subject.itertuples(index=False)])
    )


def _arm_work(frame: pd.DataFrame) -> float:
    cols = ["l_pectoralis", "r_pectoralis", "l_triceps", "r_triceps"]
    return float(frame[cols].sum(axis=1).mean())


def _leg_work(frame: pd.DataFrame) -> float:
    cols = [f"{s}_{n}" for s in ("l", "r") for n in ("quadriceps", "ischi_glutm")]
    return float(frame[cols].sum(axis=1).mean())


def effect_checks(
    results: list[TrialResult], config: AppConfig, noise_deg: float = 0.0
) -> EffectReport:
    """
    Named assertions on the expected effects of the exercises.

    A check whose exercises are absent is reported with passed=None; the others are still
    computed.

    Raises:
        MissingExercise: None of the checks could be computed.
    """
    frame = analysis_columns(results)
    checks: dict[str, EffectCheck] = {}

    def run(name: str, threshold: float, compute, at_least: bool) -> None:
        try:
            value = compute()
        except MissingExercise as e:
            checks[name] = EffectCheck(value=None, threshold=threshold, passed=None, detail=str(e))
            return
        passed = value >= threshold if at_least else value <= threshold
        checks[name] = EffectCheck(value=value, threshold=threshold, passed=passed)

    run(
        "arm_involvement",
        config.ARM_RATIO_MIN,
        lambda: _ratio(
            _arm_work(_require(frame, ExerciseKind.SQUATS_ARMS)),
            _arm_work(_require(frame, ExerciseKind.SQUATS_NO_ARMS)),
        ),
        at_least=True,
    )
    run(
        "leg_similarity",
        config.LEG_SIMILARITY_MAX,
        lambda: relative_difference(
            _leg_work(_require(frame, ExerciseKind.SQUATS_ARMS)),
            _leg_work(_require(frame, ExerciseKind.SQUATS_NO_ARMS)),
        ),
        at_least=False,
    )
    run(
        "lunge_asymmetry",
        config.LUNGE_ASYMMETRY_MIN,
        lambda: _quadriceps_asymmetry(_require(frame, ExerciseKind.LUNGES)),
        at_least=True,
    )

    def squat_symmetry() -> float:
        squats = frame[frame["exercise"].isin([e.value for e in SQUATS])]
        if squats.empty:
            raise MissingExercise(ExerciseKind.SQUATS_NO_ARMS.value)
        return _quadriceps_asymmetry(squats)

    run(
        "squat_symmetry",
        config.SQUAT_SYMMETRY_MAX if noise_deg == 0 else config.SQUAT_SYMMETRY_MAX_NOISY,
        squat_symmetry,
        at_least=False,
    )
    if all(c.passed is None for c in checks.values()):
        raise MissingExercise(", ".join(e.value for e in (*SQUATS, ExerciseKind.LUNGES)))
    for name, check in checks.items():
        if check.passed is False:
            logger.warning(
                "Effect check %s failed: %.6g vs %.6g", name, check.value, check.threshold
            )
    return EffectReport(checks=checks)


def boxplot_data(results: list[TrialResult]) -> pd.DataFrame:
    """Quartiles of every analysis signal per exercise."""
    frame = analysis_columns(results)
    rows = []
    for exercise in ExerciseKind:
        subset = frame[frame["exercise"] == exercise.value]
        if subset.empty:
            continue
        for column in ANALYSIS_COLUMNS:
            q = np.quantile(subset[column], [0.0, 0.25, 0.5, 0.75, 1.0])
            rows.append({"exercise": exercise.value, "group": column, **dict(zip(QUARTILES, q))})
    return pd.DataFrame(rows, columns=["exercise", "group", *QUARTILES])


def repeatability(results: list[TrialResult], relevance: float = 0.05) -> pd.DataFrame:
    """
    Coefficient of variation across measurements per exercise and analysis signal.

    The CV is computed per subject (sample standard deviation over mean) and averaged over
    subjects. A signal is relevant when its mean work exceeds `relevance` times the largest
    mean signal of the exercise.
    """
    frame = analysis_columns(results)
    rows = []
    for exercise in ExerciseKind:
        subset = frame[frame["exercise"] == exercise.value]
        if subset.empty:
            continue
        means = subset[list(ANALYSIS_COLUMNS)].mean()
        peak = float(means.max())
        for column in ANALYSIS_COLUMNS:
            per_subject = subset.groupby("subject")[column]
            mean, std = per_subject.mean(), per_subject.std(ddof=1).fillna(0.0)
            cv = np.where(mean > 0, std / mean.where(mean > 0, 1.0), 0.0)
            rows.append(
                {
                    "exercise": exercise.value,
                    "group": column,
                    "mean": float(means[column]),
                    "cv": float(np.mean(cv)),
                    "relevant": bool(peak > 0 and means[column] > relevance * peak),
                }
            )
    return pd.DataFrame(rows, columns=["exercise", "group", "mean", "cv", "relevant"])


def compute_statistics(
    results: list[TrialResult], config: AppConfig, noise_deg: float = 0.0
) -> dict:
    """ANOVA and pairwise tests for every analysis signal, plus the effect checks."""
    exercises = {r.exercise for r in results}
    anova, pairwise = [], []
    if len(exercises) >= 2 and len({r.subject for r in results}) >= 2:
        for column in ANALYSIS_COLUMNS:
            anova.append(rm_anova(results, column).model_dump(mode="json"))
            pairwise.extend(p.model_dump(mode="json") for p in pairwise_tests(results, column))
    else:
        logger.warning("Fewer than 2 subjects or exercises; ANOVA and pairwise tests skipped")
    try:
        effects = effect_checks(results, config, noise_deg).model_dump(mode="json")
    except MissingExercise as e:
        logger.warning("Effect checks skipped: %s", e)
        effects = None
    return {
        "alpha": config.ALPHA,
        "anova": anova,
        "pairwise": pairwise,
        "effects": effects,
        "repeatability": repeatability(results).to_dict(orient="records"),
    }


def write_validation(
    results: list[TrialResult], config: AppConfig, out_dir: str | Path, noise_deg: float = 0.0
) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return {
        "trials": write_csv(trials_frame(results), out / "trials.csv"),
        "stats": write_json(compute_statistics(results, config, noise_deg), out / "stats.json"),
        "boxplot": write_csv(boxplot_data(results), out / "boxplot.csv"),
    }
