from typing import Any

from app.models import ExerciseKind
from app.skeleton_io import serialize_session
from app.synth import MotionParams, generate


class Synthesis:
    def __init__(self, mcp_instance, provider):
        self.provider = provider
        mcp_instance.tool(self.generate_exercise)

    def generate_exercise(
        self,
        kind: str,
        reps: int = 5,
        cadence_hz: float = 0.5,
        noise_deg: float = 0.0,
        seed: int = 0,
        mirror: bool = False,
    ) -> dict[str, Any]:
        """
        Generates a synthetic 60 Hz skeleton session of an exercise.

        Args:
            kind: One of arm-circles, lunges, shoulder-squeeze, squats-arms, squats-no-arms.
            reps: Number of repetitions.
            cadence_hz: Repetitions per second.
            noise_deg: Standard deviation of the Gaussian joint-angle noise in degrees.
            seed: Seed of the noise generator.
            mirror: Lunge with the left leg in front.

        Returns:
            The frame count, duration and the session as canonical-jsonl text.
        """
        params = MotionParams(
            reps=reps, cadence_hz=cadence_hz, noise_deg=noise_deg, seed=seed, mirror=mirror
        )
        stream = generate(ExerciseKind(kind), params)
        return {
            "kind": kind,
            "frames": len(stream),
            "duration_s": stream.duration_s,
            "session": serialize_session(stream),
        }
