from typing import Any

from app.aggregation import group_shares, top_groups
from app.pipeline import analyze_session
from app.skeleton_io import detect_format, parse_session


class Analysis:
    def __init__(self, mcp_instance, provider):
        self.provider = provider

        # Register tools
        mcp_instance.tool(self.analyze_session)

    def analyze_session(
        self,
        session: str,
        mass_kg: float | None = None,
        window_frames: int | None = None,
    ) -> dict[str, Any]:
        """
        Computes the muscle work of a recorded skeleton session.

        Args:
            session: The session as canonical-jsonl or kinect32-jsonl text, one frame per line.
            mass_kg: The subject's body mass; the configured default when omitted.
            window_frames: Trailing window of the live display in frames.

        Returns:
            The accumulated session summary, the relative share of every group and limb, and
            the three groups that did the most work.
        """
        stream = parse_session(session, detect_format(session))
        result = analyze_session(
            stream,
            self.provider.model,
            self.provider.config,
            mass_kg=mass_kg,
            window_frames=window_frames,
        )
        return {
            "summary": result.summary.model_dump(mode="json"),
            "shares": group_shares(result.summary),
            "top_groups": [{"group": k, "work": v} for k, v in top_groups(result.summary)],
        }
