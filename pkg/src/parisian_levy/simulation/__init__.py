"""Path simulation of the Parisian-reflected process.

The per-path kernel exists twice: a compiled extension (``_ckernel``) and a
pure-Python reference (``_pykernel``).  The compiled one is used when it can
be imported; set ``PARISIAN_LEVY_KERNEL=python`` to force the fallback.
"""
from .simulator import (
    KERNEL_NAME,
    MCEstimate,
    Mode,
    PathOutcome,
    SimConfig,
    SimulationError,
    StopReason,
    TARGETS,
    estimate,
    estimate_many,
    get_kernel,
    simulate_path,
)

__all__ = [
    "KERNEL_NAME",
    "MCEstimate",
    "Mode",
    "PathOutcome",
    "SimConfig",
    "SimulationError",
    "StopReason",
    "TARGETS",
    "estimate",
    "estimate_many",
    "get_kernel",
    "simulate_path",
]
