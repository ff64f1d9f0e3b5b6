from contextlib import contextmanager

from app.config import AppConfig
from app.database import init_db
from app.muscle_model import load_model
from app.tools.analysis import Analysis
from app.tools.measures import Measures
from app.tools.synthesis import Synthesis

DEFAULT_COHORT_DATABASE_URL = "sqlite:///./cohort.db"


class Tools:
    def __init__(self, mcp_instance, config: AppConfig, model_path: str | None = None):
        """
        Initialize tools with configuration.

        Args:
            mcp_instance: The FastMCP instance
            config: Application configuration
            model_path: Musculoskeletal model file; the bundled model when None
        """
        self.config = config
        self.model_path = model_path
        self._session_local = None
        self._model = None

        # Initialize tools
        self.analysis = Analysis(mcp_instance, self)
        self.synthesis = Synthesis(mcp_instance, self)
        self.measures = Measures(mcp_instance, self)

    @contextmanager
    def get_db(self):
        if self._session_local is None:
            self._session_local = init_db(
                self.config.COHORT_DATABASE_URL or DEFAULT_COHORT_DATABASE_URL
            )

        db = self._session_local()
        try:
            yield db
        finally:
            db.close()

    @property
    def model(self):
        """Lazy-load the musculoskeletal model."""
        if self._model is None:
            self._model = load_model(self.model_path, self.config.SPECIFIC_TENSION)
        return self._model
