from typing import Any

from sqlalchemy.orm import Session

from app.database import MeasureRecord
from app.measures import hr_weighted_mw, normalize_across
from app.models import MeasureSet

# Columns normalized across the cohort, in output order.
NORMALIZED_COLUMNS = ("mw_total", "bc_kcal", "av_hr", "pk_hr", "rpe")


def _as_dict(record: MeasureRecord) -> dict[str, Any]:
    return {
        "participant": record.participant,
        **MeasureSet(
            bc_kcal=record.bc_kcal,
            bc_method=record.bc_method,
            rpe=record.rpe,
            rpe_predicted_hr=record.rpe_predicted_hr,
            verdict=record.verdict,
            mw_total=record.mw_total,
            av_hr=record.av_hr,
            pk_hr=record.pk_hr,
        ).model_dump(mode="json", exclude={"h_mw_normalized"}),
    }


def record_measures(db: Session, participant: str, measures: MeasureSet) -> dict[str, Any]:
    """
    Stores a participant's measures, replacing any earlier record of the same participant.

    Args:
        db: The SQLAlchemy database session.
        participant: The participant identifier.
        measures: The measure set of the participant's session.

    Returns:
        The stored record as a dictionary.

    Raises:
        ValueError: If the participant identifier is empty.
    """
    if not participant:
        raise ValueError("Participant identifier must not be empty.")
    data = measures.model_dump(exclude={"h_mw_normalized"})
    db_record = db.query(MeasureRecord).filter(MeasureRecord.participant == participant).first()
    if db_record:
        for key, value in data.items():
            setattr(db_record, key, value)
    else:
        db_record = MeasureRecord(participant=participant, **data)
        db.add(db_record)
    db.commit()
    db.refresh(db_record)
    return _as_dict(db_record)


def get_measures(db: Session, participant: str | None = None) -> list[dict[str, Any]]:
    """
    Retrieves stored measures, ordered by participant.

    Args:
        db: The SQLAlchemy database session.
        participant: Only this participant when given.

    Returns:
        A list of measure records as dictionaries.
    """
    query = db.query(MeasureRecord)
    if participant:
        query = query.filter(MeasureRecord.participant == participant)
    return [_as_dict(r) for r in query.order_by(MeasureRecord.participant).all()]


def delete_measures(db: Session, participant: str) -> bool:
    """
    Deletes a participant's record.

    Returns:
        True if the record was deleted, False otherwise.
    """
    db_record = db.query(MeasureRecord).filter(MeasureRecord.participant == participant).first()
    if db_record:
        db.delete(db_record)
        db.commit()
        return True
    return False


def cohort_normalized(db: Session) -> list[dict[str, Any]]:
    """
    Normalizes every participant's measures against the rest of the cohort.

    Returns:
        One dictionary per participant with mw_total, bc_kcal, av_hr, pk_hr and rpe min-max
        normalized across participants, plus h_mw (muscle work weighted by average heart rate).

    Raises:
        DegenerateRange: Fewer than two participants are stored.
    """
    records = get_measures(db)
    normalized = {c: normalize_across([r[c] for r in records]) for c in NORMALIZED_COLUMNS}
    h_mw = hr_weighted_mw([r["mw_total"] for r in records], [r["av_hr"] for r in records])
    return [
        {
            "participant": r["participant"],
            **{c: float(normalized[c][i]) for c in NORMALIZED_COLUMNS},
            "h_mw": float(h_mw[i]),
        }
        for i, r in enumerate(records)
    ]
