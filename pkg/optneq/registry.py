"""
Run Registry

A small SQLite database (through SQLAlchemy Core) that remembers every
``run``: one row per experiment and one per (variant, path) task with its
status, last iteration, wall time and CSV location. The registry is
bookkeeping only; CSV outputs never depend on it.
"""

from __future__ import annotations

import json
import logging
from datetime import datetime, timezone
from pathlib import Path

import pandas as pd
import sqlalchemy
from sqlalchemy import Column, Float, ForeignKey, Integer, MetaData, String, Table, Text

from .settings import settings

logger = logging.getLogger(__name__)

metadata = MetaData()

experiments = Table(
    "experiments",
    metadata,
    Column("id", Integer, primary_key=True, autoincrement=True),
    Column("name", String(200), nullable=False),
    Column("algorithm", String(40), nullable=False),
    Column("output_dir", Text, nullable=False),
    Column("config_json", Text, nullable=False),
    Column("started_at", String(40), nullable=False),
    Column("wall_time_s", Float),
    Column("status", String(20), nullable=False),
)

tasks = Table(
    "tasks",
    metadata,
    Column("id", Integer, primary_key=True, autoincrement=True),
    Column("experiment_id", Integer, ForeignKey("experiments.id"), nullable=False),
    Column("variant", String(60), nullable=False),
    Column("path", Integer, nullable=False),
    Column("status", String(20), nullable=False),
    Column("k_reached", Integer),
    Column("rows", Integer),
    Column("csv_path", Text),
    Column("wall_time_s", Float),
    Column("error", Text),
)


def registry_url(location: str | Path | None = None, output_dir: str | Path | None = None) -> str:
    """
    SQLAlchemy URL of the registry.

    ``location`` may be a URL or a filesystem path; without it the
    OPTNEQ_RESULTS_DB setting is used, then ``<output_dir>/runs.db``.
    """
    location = location or settings.results_db
    if location is None:
        location = Path(output_dir or settings.output_dir) / "runs.db"
    location = str(location)
    if "://" in location:
        return location
    Path(location).parent.mkdir(parents=True, exist_ok=True)
    return f"sqlite:///{Path(location).as_posix()}"


class RunRegistry:
    """Thin wrapper around the two registry tables."""

    def __init__(self, url: str):
        self.url = url
        self.engine = sqlalchemy.create_engine(url)
        metadata.create_all(self.engine)

    def record_experiment(self, name: str, algorithm: str, output_dir: str, config: dict,
                          wall_time_s: float, status: str, task_results: list[dict]) -> int:
        started = datetime.now(timezone.utc).isoformat(timespec="seconds")
        with self.engine.begin() as conn:
            result = conn.execute(experiments.insert().values(
                name=name,
                algorithm=algorithm,
                output_dir=output_dir,
                config_json=json.dumps(config, sort_keys=True),
                started_at=started,
                wall_time_s=wall_time_s,
                status=status,
            ))
            exp_id = int(result.inserted_primary_key[0])
            if task_results:
                conn.execute(tasks.insert(), [
                    {
                        "experiment_id": exp_id,
                        "variant": r["variant"],
                        "path": r["path"],
                        "status": r["status"],
                        "k_reached": r.get("k_reached"),
                        "rows": r.get("rows"),
                        "csv_path": r.get("csv"),
                        "wall_time_s": r.get("wall_time_s"),
                        "error": r.get("error"),
                    }
                    for r in task_results
                ])
        logger.debug("registered experiment %s as id %d", name, exp_id)
        return exp_id

    def experiments_frame(self) -> pd.DataFrame:
        with self.engine.connect() as conn:
            return pd.read_sql(sqlalchemy.select(experiments).order_by(experiments.c.id), conn)

    def tasks_frame(self, experiment_id: int | None = None) -> pd.DataFrame:
        query = sqlalchemy.select(tasks).order_by(tasks.c.id)
        if experiment_id is not None:
            query = query.where(tasks.c.experiment_id == experiment_id)
        with self.engine.connect() as conn:
            return pd.read_sql(query, conn)

    def reset(self) -> None:
        """Drop and recreate both tables."""
        metadata.drop_all(self.engine)
        metadata.create_all(self.engine)
