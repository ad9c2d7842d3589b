"""Parameter estimation for hidden AR(1) and log-SV models observed with noise."""

from .model import (ModelKind, ModelSpec, ParamBox, Theta, Trajectory, make_rng, simulate, simulate_ar1,
                    simulate_sv)
from .optimize import MinimizeResult

__all__ = [
    "ModelKind", "ModelSpec", "ParamBox", "Theta", "Trajectory",
    "make_rng", "simulate", "simulate_ar1", "simulate_sv", "MinimizeResult",
]
__version__ = "0.1.0"
