import json
import logging
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings

logger = logging.getLogger(__name__)

LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}

RGB = tuple[int, int, int]


class AppConfig(BaseSettings):
    """Engine configuration with validation and immutability."""

    MUSCLEWORK_LOG: Literal["error", "warn", "info", "debug"] = Field(
        default="warn", description="Log level for the engine loggers"
    )

    # Stream preparation
    RATE_HZ: float = Field(default=60.0, description="Resampling rate in Hz", gt=0)
    SMOOTH_WINDOW: int = Field(
        default=5, description="Centered moving-average window in frames (odd)", ge=1
    )

    # Display
    WINDOW_FRAMES: int = Field(default=60, description="Trailing median window in frames", ge=1)
    WINDOW_MODE: Literal["increments", "cumulative"] = Field(
        default="increments",
        description="Median over per-frame increments or over cumulative group sums",
    )
    NORMALIZATION: Literal["running-max", "fixed"] = Field(
        default="running-max", description="Denominator used for normalized display values"
    )
    FIXED_SCALE: float = Field(
        default=1.0, description="Denominator (N·s per frame) in fixed normalization", gt=0
    )
    COLOR_ANCHORS: tuple[RGB, RGB, RGB] = Field(
        default=((64, 224, 208), (0, 128, 0), (255, 0, 0)),
        description="Gradient anchors at 0.0, 0.5 and 1.0",
    )

    # Muscle model and solver
    SPECIFIC_TENSION: float = Field(
        default=30.0, description="Specific tension in N/cm² used with PCSA", gt=0
    )
    DEFAULT_MASS_KG: float = Field(
        default=70.0, description="Body mass used when the profile has none", gt=0
    )
    PENALTY_WEIGHT: float = Field(
        default=1e6, description="Torque penalty weight for infeasible frames", gt=0
    )
    MAX_ITERATIONS: int = Field(default=10_000, description="Solver iteration cap", ge=1)
    SOLVER_METHOD: Literal["projected-newton", "slsqp"] = Field(
        default="projected-newton", description="Static optimization method"
    )

    # Measures
    RPE_BASE: float = Field(default=0.55, description="HRmax fraction at RPE 0")
    RPE_SLOPE: float = Field(default=0.045, description="HRmax fraction per RPE level")
    RPE_EQUAL_BAND: float = Field(
        default=0.05, description="Equal verdict half-width as a fraction of HRmax", ge=0
    )

    # Validation
    ARM_RATIO_MIN: float = Field(default=3.0, description="Squat arm-involvement ratio")
    LEG_SIMILARITY_MAX: float = Field(
        default=0.05, description="Leg work difference between squats with and without arms"
    )
    LUNGE_ASYMMETRY_MIN: float = Field(default=0.3, description="Lunge quadriceps asymmetry")
    SQUAT_SYMMETRY_MAX: float = Field(
        default=0.05, description="Squat quadriceps asymmetry at zero noise"
    )
    SQUAT_SYMMETRY_MAX_NOISY: float = Field(
        default=0.15, description="Squat quadriceps asymmetry with angle noise"
    )
    ALPHA: float = Field(default=0.05, description="Significance threshold", gt=0, lt=1)

    # Cohort store and tool server
    COHORT_DATABASE_URL: str | None = Field(
        default=None, description="SQLAlchemy URL of the cohort measures store"
    )
    HOST: str = Field(default="0.0.0.0", description="Tool server host address")
    PORT: int = Field(default=8000, description="Tool server port number", ge=1, le=65535)

    model_config = {
        # Makes the config immutable
        "frozen": True,
        # Allow loading from .env files
        "env_file": ".env",
        "env_file_encoding": "utf-8",
    }

    @property
    def log_level(self) -> int:
        return LOG_LEVELS[self.MUSCLEWORK_LOG]


def load_config(config_path: str | None = None) -> AppConfig:
    """
    Load configuration from JSON file or environment variables.

    Args:
        config_path: Optional path to JSON config file. If provided, loads from JSON.
                    If None, loads from environment variables or uses defaults.

    Returns:
        Immutable AppConfig instance with validated configuration.

    Raises:
        json.JSONDecodeError: If the config file contains invalid JSON.
    """
    if config_path:
        try:
            with open(config_path) as f:
                config_dict = json.load(f)
                return AppConfig(**config_dict)
        except FileNotFoundError:
            logger.warning(
                "Configuration file not found at %s. Using defaults and environment variables.",
                config_path,
            )
            return AppConfig()
        except json.JSONDecodeError as e:
            logger.error("Could not decode JSON from %s: %s", config_path, e)
            raise
    else:
        # Load from environment variables or use defaults
        return AppConfig()
