from __future__ import annotations

from sqlalchemy import Column, Float, Integer, String, create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

Base = declarative_base()


def init_db(database_url: str):
    """
    Initializes the cohort store connection and creates tables if they don't exist.

    Args:
        database_url: The SQLAlchemy database connection URL

    Returns:
        A sessionmaker factory for creating database sessions.
    """
    connect_args = {"check_same_thread": False} if database_url.startswith("sqlite") else {}
    engine = create_engine(database_url, connect_args=connect_args)

    # Create all tables if they don't exist
    Base.metadata.create_all(bind=engine)

    return sessionmaker(autocommit=False, autoflush=False, bind=engine)


class MeasureRecord(Base):
    """The latest measure set of one participant."""

    __tablename__ = "measures"
    participant = Column(String, primary_key=True, index=True)
    bc_kcal = Column(Float, nullable=False)
    bc_method = Column(String, nullable=False)
    rpe = Column(Integer, nullable=False)
    rpe_predicted_hr = Column(Float, nullable=False)
    verdict = Column(String, nullable=False)
    mw_total = Column(Float, nullable=False)
    av_hr = Column(Float, nullable=False)
    pk_hr = Column(Float, nullable=False)
