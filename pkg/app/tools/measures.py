from typing import Any

from app import crud
from app.measures import correlate_measures, session_measures
from app.models import HeartRateSeries, MeasureSet, RpeRating, SessionSummary, SubjectProfile


class Measures:
    def __init__(self, mcp_instance, provider):
        self.provider = provider

        # Register tools
        mcp_instance.tool(self.compute_measures)
        mcp_instance.tool(self.get_cohort_measures)
        mcp_instance.tool(self.delete_participant)
        mcp_instance.tool(self.get_cohort_normalized)
        mcp_instance.tool(self.correlate_cohort)

    def compute_measures(
        self,
        summary: dict[str, Any],
        age: float,
        heart_rate: list[tuple[int, float]],
        rpe: int,
        gender: str = "unspecified",
        mass: float | None = None,
        met: float | None = None,
        minutes: float | None = None,
        participant: str | None = None,
    ) -> dict[str, Any]:
        """
        Computes burned calories, the RPE verdict and the muscle work total of a session.

        Args:
            summary: A session summary as returned by analyze_session.
            age: The subject's age in years.
            heart_rate: Heart-rate samples as [t_ms, bpm] pairs.
            rpe: The perceived exertion rating, 1 to 10.
            gender: male, female or unspecified; unspecified requires met.
            mass: Body mass in kg.
            met: Metabolic equivalent of the activity, used when gender is unspecified.
            minutes: Activity duration; the session duration when omitted.
            participant: When given, the measures are stored in the cohort under this identifier.

        Returns:
            The measure set; h_mw_normalized is filled when the stored cohort has at least two
            participants.
        """
        config = self.provider.config
        measures = session_measures(
            SessionSummary.model_validate(summary),
            SubjectProfile(age=age, mass=mass, gender=gender),
            HeartRateSeries(samples=heart_rate),
            RpeRating(value=rpe),
            met=met,
            minutes=minutes,
            default_mass=config.DEFAULT_MASS_KG,
            rpe_base=config.RPE_BASE,
            rpe_slope=config.RPE_SLOPE,
            equal_band=config.RPE_EQUAL_BAND,
        )
        if not participant:
            return measures.model_dump(mode="json")

        with self.provider.get_db() as db:
            crud.record_measures(db=db, participant=participant, measures=measures)
            if len(crud.get_measures(db=db)) >= 2:
                cohort = {r["participant"]: r for r in crud.cohort_normalized(db=db)}
                measures = measures.model_copy(
                    update={"h_mw_normalized": cohort[participant]["h_mw"]}
                )
        return measures.model_dump(mode="json")

    def get_cohort_measures(self, participant: str | None = None) -> list[dict[str, Any]]:
        """
        Retrieves the stored measures of the cohort.

        Args:
            participant: Only this participant when given.

        Returns:
            A list of measure records ordered by participant.
        """
        with self.provider.get_db() as db:
            return crud.get_measures(db=db, participant=participant)

    def delete_participant(self, participant: str) -> dict[str, Any]:
        """
        Deletes a participant's stored measures.

        Args:
            participant: The participant identifier.

        Returns:
            A dictionary confirming the deletion status.
        """
        with self.provider.get_db() as db:
            success = crud.delete_measures(db=db, participant=participant)
            return {"participant": participant, "deleted": success}

    def get_cohort_normalized(self) -> list[dict[str, Any]]:
        """
        Normalizes every stored participant's measures against the rest of the cohort.

        Returns:
            Per participant: normalized muscle work, burned calories, average and peak heart
            rate, RPE, and the heart-rate weighted muscle work.
        """
        with self.provider.get_db() as db:
            return crud.cohort_normalized(db=db)

    def correlate_cohort(self) -> dict[str, dict[str, float]]:
        """
        Spearman rank correlations between burned calories, RPE, muscle work and heart-rate
        weighted muscle work across the stored cohort.
        """
        with self.provider.get_db() as db:
            records = crud.get_measures(db=db)
        rows = [MeasureSet.model_validate(r) for r in records]
        return correlate_measures(rows)
