import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1]))

from setup_results_db import setup_results_database  # noqa: E402

registry = setup_results_database(sys.argv[1] if len(sys.argv) > 1 else None, reset=True)
print(f"Done. {registry.url}")
