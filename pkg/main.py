#!/usr/bin/env python3
"""
optneq command-line entry point

Runs the same commands as ``python -m optneq``:

    python main.py preset StarPP --out star_pp.json
    python main.py check star_pp.json
    python main.py run star_pp.json --out results/star_pp
    python main.py oracle star_pp.json --out results/star_pp
    python main.py rates results/star_pp/a0.5_b0.3.csv --field consensus_x --exponent 0.2 --gamma 9 --window 1000:100000

Defaults (output directory, workers, log level, registry location) come from
the environment or a ``.env`` file; see optneq/settings.py.
"""

import sys

from optneq.cli import main

if __name__ == "__main__":
    sys.exit(main())
