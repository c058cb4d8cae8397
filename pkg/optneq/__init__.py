"""
optneq: distributed optimal Nash equilibrium seeking over networks.

IR-Push-Pull (directed networks) and IR-DSGT (undirected networks with
sampled oracles) drive every agent towards the equilibrium of a monotone game
that minimises a welfare loss, while a sequential-regularization oracle
supplies the reference solution.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AlignmentError,
    AssumptionError,
    CapacityError,
    ConfigurationError,
    DivergenceError,
    FitError,
    NumericalError,
    OptNeqError,
)

__all__ = [
    "__version__",
    "AlignmentError",
    "AssumptionError",
    "CapacityError",
    "ConfigurationError",
    "DivergenceError",
    "FitError",
    "NumericalError",
    "OptNeqError",
]
