"""Two-class preemptive-priority ED queue with threshold-based redirection.

Exact stationary analysis (level-dependent QBD with geometric tail),
economic objective evaluation, threshold and capacity optimization, a
fixed-partition baseline, ratio-based sensitivity studies, and a seeded
discrete-event simulation oracle.
"""

__version__ = "0.1.0"

from .params import (  # noqa: F401
    ModelParams,
    DerivedParams,
    ParamError,
    PRESETS,
    preset,
    derive,
    check_stability,
    alpha,
    servers_urgent,
    servers_nonurgent,
)
