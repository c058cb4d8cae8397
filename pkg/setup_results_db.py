"""
Run Registry Setup Script

Creates (or, with --reset, empties) the SQLite registry that records every
``optneq run``. The location is OPTNEQ_RESULTS_DB, else <OPTNEQ_OUTPUT_DIR>/runs.db.
"""

import argparse

from optneq.registry import RunRegistry, registry_url


def setup_results_database(location=None, reset=False):
    """
    Create the registry tables and return the registry.

    Args:
        location: database path or SQLAlchemy URL (environment default when None)
        reset: drop existing rows first
    """
    url = registry_url(location)
    print(f"Preparing run registry at: {url}")
    registry = RunRegistry(url)
    if reset:
        registry.reset()
        print("Removed existing registry rows")
    print(f"✅ Registry ready ({len(registry.experiments_frame())} experiment(s) recorded)")
    return registry


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("--location", default=None, help="Database path or URL.")
    parser.add_argument("--reset", action="store_true", help="Drop and recreate the tables.")
    args = parser.parse_args()
    setup_results_database(args.location, args.reset)
