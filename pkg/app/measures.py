"""Exertion measures compared against muscle work: burned calories, RPE vs heart rate, H_MW."""

import logging
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.errors import (
    DegenerateRange,
    GenderRequired,
    InputError,
    LengthMismatch,
    NegativeDuration,
    SchemaError,
)
from app.models import (
    HeartRateSeries,
    MeasureSet,
    RpeRating,
    SessionSummary,
    SubjectProfile,
    Verdict,
)

logger = logging.getLogger(__name__)

KJ_PER_KCAL = 4.184

# Per-minute energy expenditure regressions on heart rate, mass and age (kJ/min).
HR_REGRESSION = {
    "male": (-55.0969, 0.6309, 0.1988, 0.2017),
    "female": (-20.4022, 0.4472, -0.1263, 0.074),
}


def _check_minutes(minutes: float) -> None:
    if minutes < 0:
        raise NegativeDuration(minutes)


def burned_calories_hr(
    p: SubjectProfile, hr: HeartRateSeries, minutes: float, default_mass: float = 70.0
) -> float:
    """
    Burned calories (kcal) from the gender-specific heart-rate regression.

    Args:
        p: Subject profile; gender must be male or female.
        hr: Heart-rate samples; their average is the regression input.
        minutes: Activity duration.
        default_mass: Mass used when the profile has none.

    Raises:
        GenderRequired: Gender is unspecified.
        NegativeDuration: minutes < 0.
    """
    _check_minutes(minutes)
    if p.gender not in HR_REGRESSION:
        raise GenderRequired()
    mass = p.mass
    if mass is None:
        logger.warning("Profile has no mass; using %.1f kg for calories", default_mass)
        mass = default_mass
    intercept, k_hr, k_mass, k_age = HR_REGRESSION[p.gender]
    per_minute = (intercept + k_hr * hr.avg_hr + k_mass * mass + k_age * p.age) / KJ_PER_KCAL
    return max(0.0, per_minute * minutes)


def burned_calories_met(met: float, mass_kg: float, minutes: float) -> float:
    """kcal = MET × 3.5 ml O₂/kg/min × mass / 200 × minutes."""
    if not met > 0:
        raise InputError(f"MET must be positive, got {met}")
    _check_minutes(minutes)
    return met * 3.5 * mass_kg / 200.0 * minutes


def rpe_label(value: int) -> str:
    return RpeRating(value=value).label


def rpe_predicted_hr(
    r: RpeRating, p: SubjectProfile, base: float = 0.55, slope: float = 0.045
) -> float:
    return (220.0 - p.age) * (base + slope * r.value)


def rpe_hr_compare(
    r: RpeRating,
    p: SubjectProfile,
    measured_avg_hr: float,
    *,
    base: float = 0.55,
    slope: float = 0.045,
    equal_band: float = 0.05,
) -> tuple[Verdict, float]:
    """
    Compare the measured average heart rate with the one implied by the RPE rating.

    Returns:
        The verdict for the measured rate relative to the prediction, and the prediction (bpm).
    """
    hr_max = 220.0 - p.age
    predicted = rpe_predicted_hr(r, p, base, slope)
    difference = measured_avg_hr - predicted
    if abs(difference) <= equal_band * hr_max:
        return "Equal", predicted
    return ("Higher" if difference > 0 else "Lower"), predicted


def normalize_across(values) -> np.ndarray:
    """Min-max normalization over participants; all-equal input maps to 0.5."""
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise DegenerateRange(f"need at least 2 participants to normalize, got {x.size}")
    lo, hi = x.min(), x.max()
    if hi == lo:
        logger.warning("All %d values equal %.6g; normalized to 0.5", x.size, lo)
        return np.full_like(x, 0.5)
    return (x - lo) / (hi - lo)


def hr_weighted_mw(mw_total, av_hr) -> np.ndarray:
    mw, hr = np.asarray(mw_total, dtype=float), np.asarray(av_hr, dtype=float)
    if mw.shape != hr.shape:
        raise LengthMismatch(mw.size, hr.size)
    return normalize_across(mw * hr)


def read_heart_rate_csv(path: str | Path) -> HeartRateSeries:
    """Read a `t_ms,bpm` CSV file."""
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise SchemaError(f"{path}: {e}") from e
    missing = {"t_ms", "bpm"} - set(frame.columns)
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(sorted(missing))}")
    try:
        samples = zip(frame["t_ms"], frame["bpm"], strict=True)
        return HeartRateSeries(samples=[(int(t), float(b)) for t, b in samples])
    except (ValidationError, ValueError) as e:
        raise SchemaError(f"{path}: {e}") from e


def read_profile(path: str | Path) -> SubjectProfile:
    """Read a JSON subject profile."""
    try:
        return SubjectProfile.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except ValidationError as e:
        raise SchemaError(f"profile {path}: {e}") from e


def session_measures(
    summary: SessionSummary,
    profile: SubjectProfile,
    hr: HeartRateSeries,
    rpe: RpeRating,
    *,
    met: float | None = None,
    minutes: float | None = None,
    default_mass: float = 70.0,
    rpe_base: float = 0.55,
    rpe_slope: float = 0.045,
    equal_band: float = 0.05,
) -> MeasureSet:
    """
    The BC/RPE/MW triplet of one session.

    Burned calories come from the heart-rate regression when the gender is known and from the
    MET estimate otherwise; the session duration is used when minutes is not given.
    """
    minutes = summary.duration_s / 60.0 if minutes is None else minutes
    if profile.gender in HR_REGRESSION:
        bc, method = burned_calories_hr(profile, hr, minutes, default_mass), "heart-rate"
    elif met is not None:
        bc, method = burned_calories_met(met, profile.mass or default_mass, minutes), "met"
    else:
        raise GenderRequired()
    verdict, predicted = rpe_hr_compare(
        rpe, profile, hr.avg_hr, base=rpe_base, slope=rpe_slope, equal_band=equal_band
    )
    return MeasureSet(
        bc_kcal=bc,
        bc_method=method,
        rpe=rpe.value,
        rpe_predicted_hr=predicted,
        verdict=verdict,
        mw_total=summary.overall,
        av_hr=hr.avg_hr,
        pk_hr=hr.peak_hr,
    )


MEASURE_COLUMNS = ("bc_kcal", "rpe", "mw_total", "h_mw")


def correlate_measures(rows: list[MeasureSet]) -> dict[str, dict[str, float]]:
    """Spearman rank correlations between BC, RPE, MW and H_MW across participants."""
    if len(rows) < 3:
        raise InputError(f"need at least 3 participants to correlate, got {len(rows)}")
    frame = pd.DataFrame([r.model_dump() for r in rows])
    frame["h_mw"] = hr_weighted_mw(frame["mw_total"], frame["av_hr"])
    corr = frame[list(MEASURE_COLUMNS)].corr(method="spearman")
    return {a: {b: float(corr.loc[a, b]) for b in MEASURE_COLUMNS} for a in MEASURE_COLUMNS}

