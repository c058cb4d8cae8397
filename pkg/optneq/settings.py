"""
Environment-driven settings.

Values come from the process environment, optionally populated from a
``.env`` file in the working directory. Everything here is a default:
experiment files and CLI flags override it.

    OPTNEQ_OUTPUT_DIR      default output directory for `run` and `oracle`
    OPTNEQ_WORKERS         default worker count for variants / sample paths
    OPTNEQ_LOG_LEVEL       root log level used by the CLI
    OPTNEQ_RESULTS_DB      run registry location (path or SQLAlchemy URL)
    OPTNEQ_POWER_MAX_ITER  power-iteration cap for Perron vectors
    OPTNEQ_POWER_TOL       power-iteration tolerance on successive iterates
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from dotenv import load_dotenv

# Load environment variables from .env if present
load_dotenv()


@dataclass(frozen=True)
class Settings:
    """Snapshot of the environment-driven defaults."""

    output_dir: str
    workers: int
    log_level: str
    results_db: str | None
    power_max_iter: int
    power_tol: float


def load_settings() -> Settings:
    """Read the current environment into a ``Settings`` object."""
    return Settings(
        output_dir=os.getenv("OPTNEQ_OUTPUT_DIR", "results"),
        workers=int(os.getenv("OPTNEQ_WORKERS", "1")),
        log_level=os.getenv("OPTNEQ_LOG_LEVEL", "INFO").upper(),
        results_db=os.getenv("OPTNEQ_RESULTS_DB") or None,
        power_max_iter=int(os.getenv("OPTNEQ_POWER_MAX_ITER", "100000")),
        power_tol=float(os.getenv("OPTNEQ_POWER_TOL", "1e-12")),
    )


settings = load_settings()
