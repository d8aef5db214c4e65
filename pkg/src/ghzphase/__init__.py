"""Simulator, calibrator and resource planner for GHZ-ladder phase estimation."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    Angle,
    BoundConstants,
    InfeasibleError,
    SchedulePlan,
    StepSpec,
    canonicalize,
    circle_distance,
    total_probes,
)

__all__ = [
    "Angle",
    "BoundConstants",
    "InfeasibleError",
    "SchedulePlan",
    "StepSpec",
    "canonicalize",
    "circle_distance",
    "total_probes",
    "__version__",
]
