from contextlib import contextmanager
from unittest.mock import MagicMock

import pytest

from app.config import AppConfig


@pytest.fixture
def mock_mcp():
    """Fixture to mock the mcp instance."""
    return MagicMock()


@pytest.fixture
def mock_db_session():
    """Fixture for a mock database session."""
    return MagicMock()


@pytest.fixture
def mock_model():
    """Fixture for a mock musculoskeletal model."""
    return MagicMock()


@pytest.fixture
def mock_provider(mock_db_session, mock_model):
    """
    Fixture to mock the tool provider, which manages access to the
    cohort store, the configuration and the musculoskeletal model.
    """
    provider = MagicMock()

    @contextmanager
    def mock_get_db():
        yield mock_db_session

    provider.get_db = mock_get_db
    provider.config = AppConfig()
    provider.model = mock_model
    return provider
